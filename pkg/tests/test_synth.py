from collections import defaultdict

import pytest
from hypothesis import given, settings, strategies as st

from hyperformer.synth import SyntheticSpec, generate, strip_qualifiers


def completions(statements, side="tail"):
    out = defaultdict(set)
    for s in statements:
        key = (s.head, s.relation) if side == "tail" else (s.tail, s.relation)
        out[key].add((s.tail if side == "tail" else s.head, s.qualifiers))
    return out


@pytest.mark.parametrize("side", ["tail", "head"])
def test_every_context_has_b_qualified_completions(side):
    b = generate(SyntheticSpec(entities=200, branching=4))
    everything = b.train + b.valid + b.test
    for answers in completions(everything, side).values():
        assert len(answers) == 4
        assert len({a for a, _ in answers}) == 4
        # the qualifier value decides the answer
        assert len({q[0][1] for _, q in answers}) == 4


def test_stripping_leaves_b_candidates_per_context():
    b = generate(SyntheticSpec(branching=4))
    bare = strip_qualifiers(b.train + b.valid + b.test)
    assert all(not s.qualifiers for s in bare)
    for answers in completions(bare).values():
        assert len({a for a, _ in answers}) == 4


def test_splits_partition_contexts_and_share_qualifier_vocabulary():
    b = generate(SyntheticSpec())
    ctx = {name: {(s.head, s.relation) for s in b.split(name)} for name in ("train", "valid", "test")}
    assert not (ctx["train"] & ctx["test"]) and not (ctx["train"] & ctx["valid"]) and not (ctx["valid"] & ctx["test"])
    train_quals = {p for s in b.train for p in s.qualifiers}
    assert {p for s in b.test for p in s.qualifiers} <= train_quals
    assert len(b.vocab.entities) == 200 and len(b.vocab.relations) == 20


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_generation_is_seeded(seed):
    a, b = generate(SyntheticSpec(seed=seed)), generate(SyntheticSpec(seed=seed))
    assert a.train == b.train and a.test == b.test


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(branching=1)
    with pytest.raises(ValueError):
        SyntheticSpec(entities=10, branching=4)
    with pytest.raises(ValueError):
        SyntheticSpec(relations=3, qualifier_keys=3)
    with pytest.raises(ValueError):
        SyntheticSpec(relations=5, qualifier_keys=2, contexts_per_group=4)
