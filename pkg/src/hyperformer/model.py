"""The full model: embeddings, aggregators, CBI fusion, encoder and entity scoring."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .aggregators import (
    ENTITY, NUM_ROLES, PAD, RELATION,
    add_position_type, aggregate_entity_neighbors, aggregate_relation_qualifiers,
    build_sequence, sequence_length, stack_sequences, token_vectors,
)
from .autograd import Parameter, Tensor
from .cbi import CBI, CbiConfig, count_cbi_params
from .composition import CompositionKind
from .encoder import Encoder, EncoderConfig, MoEConfig, count_params as count_encoder_params
from .hkg import HkgGraph, Statement
from .layers import Module

VARIANTS = ("none", "ena", "rqa", "full")
FFN_KINDS = ("moe", "dense")


@dataclass
class ModelConfig:
    dim: int = 400
    layers: int = 8
    heads: int = 2
    input_dropout: float = 0.7
    hidden_dropout: float = 0.1
    ffn: str = "moe"
    experts: int = 64
    top_experts: int = 2
    gate_mode: str = "binary"
    expert_activation: bool = False
    straight_through: bool = True
    conv_channels: int = 96
    conv_kernel: int = 9
    conv_input_dropout: float = 0.2
    conv_hidden_dropout: float = 0.5
    grid_rows: int | None = None
    composition: str = "distmult"
    variant: str = "full"
    entity_neighbors: int = 3
    max_qualifiers: int = 6
    strip_qualifiers: bool = False
    neighbor_resample: bool = False
    # unit scale keeps raw embeddings comparable to the layer-normed
    # encoder outputs that ENA averages and adds to them; None means 1/sqrt(dim)
    embedding_std: float | None = 1.0
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.ffn not in FFN_KINDS:
            raise ValueError(f"ffn must be one of {FFN_KINDS}, got {self.ffn!r}")
        CompositionKind.parse(self.composition)
        self.encoder_config()

    @property
    def uses_ena(self) -> bool:
        return self.variant in ("ena", "full")

    @property
    def uses_rqa(self) -> bool:
        return self.variant in ("rqa", "full")

    def encoder_config(self) -> EncoderConfig:
        moe = None
        if self.ffn == "moe":
            moe = MoEConfig(self.experts, self.top_experts, self.gate_mode, self.expert_activation,
                            self.straight_through)
        return EncoderConfig(self.layers, self.dim, self.heads, self.input_dropout, self.hidden_dropout, moe)

    def cbi_config(self) -> CbiConfig:
        return CbiConfig(self.conv_channels, self.conv_kernel, self.conv_input_dropout,
                         self.conv_hidden_dropout, self.grid_rows)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def count_model_params(cfg: ModelConfig, num_entities: int, num_relations: int) -> dict[str, int]:
    """Analytic parameter counts for a model instance (total and active per token)."""
    d = cfg.dim
    emb = (num_entities + num_relations + 2 + sequence_length(cfg.max_qualifiers) + NUM_ROLES) * d
    enc = count_encoder_params(cfg.encoder_config())
    fusion = count_cbi_params(d, cfg.cbi_config()) if cfg.variant == "full" else 0
    return {
        "embeddings": emb,
        "encoder": enc["total"],
        "fusion": fusion,
        "total": emb + enc["total"] + fusion,
        "active_per_token": emb + enc["active_per_token"] + fusion,
    }


@dataclass
class Batch:
    """Tail-prediction queries with their sampled neighbour sets."""

    statements: list[Statement]
    neighbors: list[list[Statement]] = field(default_factory=list)

    @property
    def targets(self) -> np.ndarray:
        return np.array([s.tail for s in self.statements], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.statements)


class HyperFormerModel(Module):
    def __init__(self, cfg: ModelConfig, num_entities: int, num_relations: int):
        self.config = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng([cfg.seed, 0x5EED])
        d = cfg.dim
        std = cfg.embedding_std if cfg.embedding_std is not None else 1.0 / np.sqrt(d)
        self.entity_emb = Parameter((rng.standard_normal((num_entities, d)) * std).astype(dtype))
        self.relation_emb = Parameter((rng.standard_normal((num_relations, d)) * std).astype(dtype))
        self.special_emb = Parameter((rng.standard_normal((2, d)) * std).astype(dtype))
        self.position_emb = Parameter((rng.standard_normal((sequence_length(cfg.max_qualifiers), d)) * std).astype(dtype))
        self.type_emb = Parameter((rng.standard_normal((NUM_ROLES, d)) * std).astype(dtype))
        self.encoder = Encoder(cfg.encoder_config(), rng, dtype)
        self.cbi = CBI(d, cfg.cbi_config(), rng, dtype) if cfg.variant == "full" else None
        self.graph: HkgGraph | None = None
        self._graph_pos: dict[Statement, int] = {}

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def num_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_emb.shape[0]

    def attach(self, graph: HkgGraph | None) -> "HyperFormerModel":
        """Use ``graph`` as the neighbour source for ENA."""
        self.graph = graph
        self._graph_pos = {} if graph is None else {s: i for i, s in enumerate(graph.statements)}
        return self

    # -------------------------------------------------------------- batches

    def make_batch(self, statements: Sequence[Statement], epoch: int | None = None) -> Batch:
        """Sample neighbours for each query; a query never sees itself as a neighbour."""
        statements = list(statements)
        for s in statements:
            if not (0 <= s.head < self.num_entities and 0 <= s.tail < self.num_entities):
                raise IndexError(f"unknown entity id in {s}")
            if not 0 <= s.relation < self.num_relations:
                raise IndexError(f"unknown relation id in {s}")
        neighbors: list[list[Statement]] = []
        if self.config.uses_ena:
            if self.graph is None:
                raise RuntimeError("ENA variants need a graph; call attach() first")
            ep = epoch if self.config.neighbor_resample else None
            for s in statements:
                ids = self.graph.neighbor_ids(s.head, self.config.entity_neighbors, self.config.seed, ep,
                                              exclude=self._graph_pos.get(s))
                neighbors.append([self.graph.statements[i] for i in ids])
        return Batch(statements, neighbors)

    # -------------------------------------------------------------- forward

    def enhanced_inputs(self, batch: Batch, training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        """Input vectors for the head and relation slots of the scoring sequence."""
        cfg = self.config
        heads = np.array([s.head for s in batch.statements], dtype=np.int64)
        rels = np.array([s.relation for s in batch.statements], dtype=np.int64)
        e_h = ag.embedding(self.entity_emb, heads)
        e_r = ag.embedding(self.relation_emb, rels)
        if cfg.variant == "none":
            return e_h, e_r
        e_nei = aggregate_entity_neighbors(self, batch.neighbors, training, rng) if cfg.uses_ena else None
        e_qual = None
        if cfg.uses_rqa:
            quals = [() if cfg.strip_qualifiers else s.qualifiers for s in batch.statements]
            e_qual = aggregate_relation_qualifiers(quals, cfg.composition, self.entity_emb, self.relation_emb)
        if cfg.variant == "full":
            return self.cbi(e_r, e_h + e_nei, e_qual, training, rng)
        m_h = e_h + e_nei if e_nei is not None else e_h
        m_r = e_r + e_qual if e_qual is not None else e_r
        return m_h, m_r

    def mask_encoding(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        cfg = self.config
        m_h, m_r = self.enhanced_inputs(batch, training, rng)
        seqs = [build_sequence(s, "tail", cfg.max_qualifiers, cfg.seed, use_qualifiers=not cfg.strip_qualifiers)
                for s in batch.statements]
        ids, roles = stack_sequences(seqs)
        b = len(seqs)
        rest = token_vectors(self, ids[:, 2:], roles[:, 2:])
        x = ag.concat([ag.reshape(m_h, (b, 1, self.dim)), ag.reshape(m_r, (b, 1, self.dim)), rest], axis=1)
        roles = roles.copy()
        roles[:, 0], roles[:, 1] = ENTITY, RELATION
        out = self.encoder(add_position_type(self, x, roles), roles == PAD, training=training, rng=rng)
        return out[:, 2]

    def logits(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        return ag.matmul(self.mask_encoding(batch, training, rng), ag.transpose(self.entity_emb))

    def forward_score(self, statements: Sequence[Statement], training: bool = False, rng=None) -> np.ndarray:
        """Probability over all entities for the tail slot of each statement."""
        with ag.no_grad():
            return ag.softmax(self.logits(self.make_batch(statements), training, rng), axis=-1).data

    def scores(self, statements: Sequence[Statement]) -> np.ndarray:
        with ag.no_grad():
            return self.logits(self.make_batch(statements)).data

    def parameter_count(self) -> int:
        return self.num_parameters()


def smoothed_targets(targets: np.ndarray, num_entities: int, epsilon: float, dtype=np.float64) -> np.ndarray:
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"label smoothing must be in [0, 1), got {epsilon}")
    y = np.full((len(targets), num_entities), epsilon / num_entities, dtype=dtype)
    y[np.arange(len(targets)), targets] += 1.0 - epsilon
    return y


def cross_entropy(logits: Tensor, targets: np.ndarray, epsilon: float = 0.0) -> Tensor:
    """Mean over rows of ``-sum(y * log softmax(logits))`` with smoothed targets ``y``."""
    y = smoothed_targets(targets, logits.shape[-1], epsilon, logits.dtype)
    return ag.sum_(ag.log_softmax(logits, axis=-1) * y) * (-1.0 / logits.shape[0])


def loss(model: HyperFormerModel, batch: Batch, epsilon: float, training: bool = False, rng=None) -> Tensor:
    return cross_entropy(model.logits(batch, training, rng), batch.targets, epsilon)
