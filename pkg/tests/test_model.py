import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperformer import autograd as ag
from hyperformer.aggregators import (
    MASK, PAD, aggregate_entity_neighbors, aggregate_relation_qualifiers, build_sequence, encode_mask,
    select_qualifiers,
)
from hyperformer.autograd import Tensor
from hyperformer.composition import compose
from hyperformer.gradcheck import check_full, tiny_config, tiny_graph
from hyperformer.hkg import HkgGraph, Statement
from hyperformer.model import (
    HyperFormerModel, ModelConfig, count_model_params, cross_entropy, loss, smoothed_targets,
)


def model_for(variant="ena", **kw):
    g = tiny_graph()
    return HyperFormerModel(tiny_config(variant=variant, **kw), g.num_entities, g.num_relations).attach(g), g


# ------------------------------------------------------------------ sequences


def test_bare_triple_sequence():
    seq = build_sequence(Statement(4, 2, 5), "tail", max_qualifiers=6)
    assert len(seq) == 15 and seq.mask_position == 2
    assert seq.roles[2] == MASK and seq.ids[:2].tolist() == [4, 2]
    assert seq.pad_mask[3:].all()


def test_qualifiers_fill_pairs_then_pad():
    seq = build_sequence(Statement(0, 0, 1, ((1, 2), (3, 4))), "head", max_qualifiers=6)
    assert seq.mask_position == 0
    assert seq.ids[3:7].tolist() == [1, 2, 3, 4]
    assert seq.pad_mask[7:].all() and seq.pad_mask.sum() == 8


def test_over_long_qualifier_lists_are_subsampled_deterministically():
    s = Statement(0, 0, 1, tuple((i, i) for i in range(8)))
    first = select_qualifiers(s, 6, seed=3)
    assert len(first) == 6 and set(first) <= set(s.qualifiers)
    assert all(select_qualifiers(s, 6, seed=3) == first for _ in range(3))


def test_pad_token_ids_do_not_matter():
    model, _ = model_for()
    seq = build_sequence(Statement(0, 0, 1, ((2, 3),)), "tail", max_qualifiers=2)
    ids = seq.ids.copy()
    ids[seq.pad_mask] = 0
    other = type(seq)(ids, seq.roles, seq.mask_position)
    np.testing.assert_allclose(encode_mask(model, [seq]).data, encode_mask(model, [other]).data, atol=1e-12)


# ------------------------------------------------------------------ aggregators


def test_entity_aggregator_basic_cases():
    model, g = model_for()
    a, b = g.statements[0], g.statements[1]
    one = aggregate_entity_neighbors(model, [[a]]).data
    enc = lambda s: encode_mask(model, [build_sequence(s, "head", 2, model.config.seed)]).data
    np.testing.assert_allclose(one, enc(a), atol=1e-12)
    assert not aggregate_entity_neighbors(model, [[]]).data.any()
    two = aggregate_entity_neighbors(model, [[a, b]]).data
    np.testing.assert_allclose(two, (enc(a) + enc(b)) / 2, atol=1e-6)


def test_entity_aggregator_is_permutation_invariant_bit_exact():
    model, g = model_for()
    ns = list(g.statements)
    a = aggregate_entity_neighbors(model, [ns]).data
    b = aggregate_entity_neighbors(model, [ns[::-1]]).data
    assert np.array_equal(a, b)


def test_qualifier_aggregator_basic_cases():
    model, _ = model_for("rqa")
    E, R = model.entity_emb, model.relation_emb
    assert not aggregate_relation_qualifiers([()], "rotate", E, R).data.any()
    single = aggregate_relation_qualifiers([((1, 3),)], "complex", E, R).data
    theta = compose("complex", Tensor(R.data[1]), Tensor(E.data[3])).data
    np.testing.assert_allclose(single[0], theta, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=1, max_size=6),
       st.sampled_from(["transe", "distmult", "complex", "rotate"]), st.randoms(use_true_random=False))
def test_qualifier_aggregator_is_permutation_invariant_bit_exact(pairs, kind, rnd):
    model, _ = model_for("rqa")
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = aggregate_relation_qualifiers([tuple(pairs)], kind, model.entity_emb, model.relation_emb).data
    b = aggregate_relation_qualifiers([tuple(shuffled)], kind, model.entity_emb, model.relation_emb).data
    assert np.array_equal(a, b)


# ------------------------------------------------------------------ scoring and loss


def test_make_batch_excludes_the_query_and_checks_ids():
    model, g = model_for()
    batch = model.make_batch([g.statements[0]])
    assert g.statements[0] not in batch.neighbors[0] and g.statements[1] in batch.neighbors[0]
    with pytest.raises(IndexError):
        model.make_batch([Statement(0, 0, 99)])
    detached = HyperFormerModel(tiny_config(variant="ena"), 6, 4)
    with pytest.raises(RuntimeError):
        detached.make_batch([g.statements[0]])


@pytest.mark.parametrize("variant", ["none", "ena", "rqa", "full"])
def test_scores_are_distributions(variant):
    model, g = model_for(variant)
    p = model.forward_score(g.statements)
    assert p.shape == (4, 6)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_none_variant_is_a_plain_masked_transformer():
    model, g = model_for("none")
    s = g.statements[0]
    plain = encode_mask(model, [build_sequence(s, "tail", 2, model.config.seed)])
    np.testing.assert_allclose(model.mask_encoding(model.make_batch([s])).data, plain.data, atol=1e-12)


def test_loss_special_cases():
    logits = Tensor(np.array([[2.0, 0.5, -1.0]]))
    p = np.exp([2.0, 0.5, -1.0]) / np.exp([2.0, 0.5, -1.0]).sum()
    assert float(cross_entropy(logits, np.array([0])).data) == pytest.approx(-math.log(p[0]), abs=1e-12)
    assert float(cross_entropy(Tensor(np.zeros((2, 7))), np.array([1, 3])).data) == pytest.approx(math.log(7))
    # hand computed: y = (0.1/3, 0.9 + 0.1/3, 0.1/3)
    y = np.array([0.1 / 3, 0.9 + 0.1 / 3, 0.1 / 3])
    assert float(cross_entropy(logits, np.array([1]), 0.1).data) == pytest.approx(-(y * np.log(p)).sum(), abs=1e-12)
    np.testing.assert_allclose(smoothed_targets(np.array([2]), 4, 0.2).sum(), 1.0)
    with pytest.raises(ValueError):
        smoothed_targets(np.array([0]), 3, 1.0)


def test_full_forward_gradients():
    assert check_full() <= 1e-3


@pytest.mark.parametrize("variant", ["none", "ena", "rqa", "full"])
@pytest.mark.parametrize("ffn", ["moe", "dense"])
def test_param_counter_matches_instances(variant, ffn):
    model, g = model_for(variant, ffn=ffn)
    counted = count_model_params(model.config, g.num_entities, g.num_relations)
    assert counted["total"] == model.parameter_count()


def test_overfits_five_statements():
    from hyperformer.train import AdamW

    g = tiny_graph()
    stmts = list(g.statements) + [Statement(3, 2, 5, ((1, 0),))]
    g = HkgGraph(stmts, g.vocab)
    model = HyperFormerModel(tiny_config(variant="full", dim=16, dtype="float64"), 6, 4).attach(g)
    opt = AdamW(model.parameters(), lr=0.01, weight_decay=0.0)
    batch = model.make_batch(stmts)
    for _ in range(150):
        value = loss(model, batch, 0.0, training=True, rng=np.random.default_rng(0))
        opt.zero_grad()
        ag.backward(value)
        opt.step()
    assert model.forward_score(stmts).argmax(axis=1).tolist() == [s.tail for s in stmts]


def test_config_round_trip_and_validation():
    cfg = ModelConfig(dim=16, heads=2, variant="rqa", composition="rotate")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ModelConfig(variant="bogus")
    with pytest.raises(ValueError):
        ModelConfig(dim=15, composition="complex")
