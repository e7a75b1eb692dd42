"""Finite-difference checks of every differentiable block at d = 8 in 64-bit.

MoE routing is held fixed (no straight-through term) and dropout is off, so
each checked function is smooth around the evaluation point.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autograd as ag
from .aggregators import aggregate_entity_neighbors, aggregate_relation_qualifiers
from .autograd import Tensor, grad_check
from .cbi import CBI, CbiConfig
from .composition import CompositionKind, compose
from .encoder import MoE, MoEConfig, top_k_indices
from .hkg import HkgGraph, Statement, Vocabulary
from .model import HyperFormerModel, ModelConfig, loss

D = 8
H = 1e-5
TOLERANCE = 1e-3


def tiny_config(**overrides) -> ModelConfig:
    # 1/sqrt(d) embeddings: at unit scale some loss gradients shrink to ~1e-8,
    # the size of the central-difference roundoff at h=1e-5
    kw = dict(embedding_std=None, dim=D, layers=1, heads=2, input_dropout=0.0, hidden_dropout=0.0, experts=4, top_experts=2,
              straight_through=False, conv_channels=2, conv_kernel=3, conv_input_dropout=0.0,
              conv_hidden_dropout=0.0, max_qualifiers=2, entity_neighbors=2, dtype="float64", seed=3)
    kw.update(overrides)
    return ModelConfig(**kw)


def tiny_graph() -> HkgGraph:
    vocab = Vocabulary()
    for i in range(6):
        vocab.entities.add(f"e{i}")
    for i in range(4):
        vocab.relations.add(f"r{i}")
    statements = [
        Statement(0, 0, 1, ((2, 3), (3, 4))),
        Statement(0, 1, 2, ((2, 5),)),
        Statement(1, 0, 3, ()),
        Statement(2, 1, 0, ((3, 1), (2, 4))),
    ]
    return HkgGraph(statements, vocab)


def _weights(rng, shape) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def check_composition() -> dict[str, float]:
    rng = np.random.default_rng(11)
    out = {}
    for kind in CompositionKind:
        q_r = Tensor(rng.standard_normal((3, D)))
        q_e = Tensor(rng.standard_normal((3, D)))
        w = _weights(rng, (3, D))
        out[kind.value] = grad_check(lambda: ag.sum_(compose(kind, q_r, q_e) * w), [q_r, q_e], H)
    return out


def check_moe() -> float:
    rng = np.random.default_rng(12)
    moe = MoE(D, MoEConfig(experts=4, top_k=2, straight_through=False), rng, np.float64)
    x = Tensor(rng.standard_normal((5, D)))
    selection = top_k_indices(moe.gate_probs(x).data, 2)
    w = _weights(rng, (5, D))
    return grad_check(lambda: ag.sum_(moe(x, selection) * w), [x] + moe.parameters(), H)


def check_cbi() -> float:
    rng = np.random.default_rng(13)
    cbi = CBI(D, CbiConfig(channels=2, kernel=3, input_dropout=0.0, hidden_dropout=0.0), rng, np.float64)
    rel, nei, qual = (Tensor(rng.standard_normal((2, D))) for _ in range(3))
    w1, w2 = _weights(rng, (2, D)), _weights(rng, (2, D))

    def fn():
        m_h, m_r = cbi(rel, nei, qual)
        return ag.sum_(m_h * w1) + ag.sum_(m_r * w2)

    return grad_check(fn, [rel, nei, qual] + cbi.parameters(), H)


def check_aggregators() -> dict[str, float]:
    rng = np.random.default_rng(14)
    graph = tiny_graph()
    model = HyperFormerModel(tiny_config(variant="ena"), graph.num_entities, graph.num_relations).attach(graph)
    neighbor_sets = [list(graph.statements[:2]), [graph.statements[3]]]
    w = _weights(rng, (2, D))
    ena = grad_check(lambda: ag.sum_(aggregate_entity_neighbors(model, neighbor_sets) * w), model.parameters(), H)
    quals = [graph.statements[0].qualifiers, graph.statements[3].qualifiers]
    out = {"ena": ena}
    for kind in CompositionKind:
        out[f"rqa_{kind.value}"] = grad_check(
            lambda: ag.sum_(aggregate_relation_qualifiers(quals, kind, model.entity_emb, model.relation_emb) * w),
            [model.entity_emb, model.relation_emb], H)
    return out


def check_full(variant: str = "full", ffn: str = "moe") -> float:
    graph = tiny_graph()
    model = HyperFormerModel(tiny_config(variant=variant, ffn=ffn), graph.num_entities,
                             graph.num_relations).attach(graph)
    queries = [graph.statements[0], graph.statements[3], Statement(1, 2, 4, ((3, 0),))]
    batch = model.make_batch(queries)
    # binary gates without the straight-through term are constant in the
    # parameters, so routing only matters if a perturbation flips a selection
    return grad_check(lambda: loss(model, batch, epsilon=0.1), model.parameters(), H)


SUITES: dict[str, Callable[[], object]] = {
    "composition": check_composition,
    "aggregators": check_aggregators,
    "cbi": check_cbi,
    "moe": check_moe,
    "full": check_full,
}


def run(module: str = "all") -> dict[str, float]:
    names = list(SUITES) if module == "all" else [module]
    out: dict[str, float] = {}
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown gradcheck module {name!r}; choose from {['all', *SUITES]}")
        result = SUITES[name]()
        if isinstance(result, dict):
            out.update({f"{name}.{k}": v for k, v in result.items()})
        else:
            out[name] = float(result)
    return out
