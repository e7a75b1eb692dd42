"""Masked input sequences, the shared mask encoder, and the two aggregators.

Sequence layout: slot 0 head, slot 1 relation, slot 2 tail, then
(qualifier relation, qualifier entity) pairs.  The predicted slot holds the
MASK token.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .composition import compose
from .hkg import Statement

# token roles, also the rows of the type-embedding table
ENTITY, RELATION, MASK, QUAL_REL, QUAL_ENT, PAD = range(6)
NUM_ROLES = 6
# rows of the special-token table
MASK_ROW, PAD_ROW = 0, 1


def sequence_length(max_qualifiers: int) -> int:
    return 3 + 2 * max_qualifiers


@dataclass(frozen=True)
class MaskedSequence:
    ids: np.ndarray
    roles: np.ndarray
    mask_position: int

    @property
    def pad_mask(self) -> np.ndarray:
        return self.roles == PAD

    def __len__(self) -> int:
        return len(self.ids)


def select_qualifiers(s: Statement, max_qualifiers: int, seed: int = 0) -> tuple[tuple[int, int], ...]:
    """At most ``max_qualifiers`` pairs; a seeded uniform subset (original order kept) when over."""
    quals = s.qualifiers
    if len(quals) <= max_qualifiers:
        return quals
    entropy = [seed, s.head, s.relation, s.tail] + [x for pair in quals for x in pair]
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    keep = np.sort(rng.choice(len(quals), size=max_qualifiers, replace=False))
    return tuple(quals[i] for i in keep)


def build_sequence(s: Statement, target: str = "tail", max_qualifiers: int = 6, seed: int = 0,
                   use_qualifiers: bool = True) -> MaskedSequence:
    if target not in ("head", "tail"):
        raise ValueError(f"target must be 'head' or 'tail', got {target!r}")
    n = sequence_length(max_qualifiers)
    ids = np.zeros(n, dtype=np.int64)
    roles = np.full(n, PAD, dtype=np.int64)
    ids[:] = PAD_ROW
    ids[0], roles[0] = s.head, ENTITY
    ids[1], roles[1] = s.relation, RELATION
    ids[2], roles[2] = s.tail, ENTITY
    pos = 0 if target == "head" else 2
    ids[pos], roles[pos] = MASK_ROW, MASK
    quals = select_qualifiers(s, max_qualifiers, seed) if use_qualifiers else ()
    for j, (qr, qe) in enumerate(quals):
        ids[3 + 2 * j], roles[3 + 2 * j] = qr, QUAL_REL
        ids[4 + 2 * j], roles[4 + 2 * j] = qe, QUAL_ENT
    return MaskedSequence(ids, roles, pos)


def stack_sequences(seqs: Sequence[MaskedSequence]) -> tuple[np.ndarray, np.ndarray]:
    """(ids, roles) arrays with trailing all-padding columns removed."""
    ids = np.stack([s.ids for s in seqs])
    roles = np.stack([s.roles for s in seqs])
    used = np.flatnonzero((roles != PAD).any(axis=0))
    width = int(used[-1]) + 1 if used.size else 1
    return ids[:, :width], roles[:, :width]


def token_vectors(model, ids: np.ndarray, roles: np.ndarray) -> Tensor:
    """Raw token embeddings (no position/type) for an id/role grid."""
    n_ent = model.entity_emb.shape[0]
    n_rel = model.relation_emb.shape[0]
    table = ag.concat([model.entity_emb, model.relation_emb, model.special_emb], axis=0)
    offset = np.select([(roles == RELATION) | (roles == QUAL_REL), (roles == MASK) | (roles == PAD)],
                       [n_ent, n_ent + n_rel], 0)
    return ag.embedding(table, ids + offset)


def add_position_type(model, x: Tensor, roles: np.ndarray) -> Tensor:
    n = x.shape[1]
    return x + model.position_emb[:n] + ag.embedding(model.type_emb, roles)


def encode(model, x: Tensor, roles: np.ndarray, training: bool = False, rng=None) -> Tensor:
    return model.encoder(x, roles == PAD, training=training, rng=rng)


def encode_mask(model, seqs: Sequence[MaskedSequence], training: bool = False, rng=None) -> Tensor:
    """Encoder output at each sequence's MASK position, shape (B, d)."""
    ids, roles = stack_sequences(seqs)
    x = add_position_type(model, token_vectors(model, ids, roles), roles)
    out = encode(model, x, roles, training, rng)
    pos = np.array([s.mask_position for s in seqs])
    return out[np.arange(len(seqs)), pos]


def _canonical(statements: Sequence[Statement]) -> list[Statement]:
    return sorted(statements, key=lambda s: (s.relation, s.tail, s.head, s.qualifiers))


def aggregate_entity_neighbors(model, neighbor_sets: Sequence[Sequence[Statement]],
                               training: bool = False, rng=None) -> Tensor:
    """Mean MASK encoding of each row's neighbour statements with the head masked.

    Rows without neighbours get the zero vector.  Neighbours are put in a
    canonical order first so the result does not depend on list order.
    """
    d = model.dim
    b = len(neighbor_sets)
    width = max((len(ns) for ns in neighbor_sets), default=0)
    dtype = model.entity_emb.dtype
    if width == 0:
        return Tensor(np.zeros((b, d), dtype=dtype))
    seqs, slots = [], []
    for row, ns in enumerate(neighbor_sets):
        for j, s in enumerate(_canonical(ns)):
            seqs.append(build_sequence(s, "head", model.config.max_qualifiers, model.config.seed,
                                       use_qualifiers=not model.config.strip_qualifiers))
            slots.append(row * width + j)
    enc = encode_mask(model, seqs, training, rng)
    slots = np.asarray(slots)
    grid = ag.reshape(ag.index_add((b * width, d), slots, enc), (b, width, d))
    counts = np.array([len(ns) for ns in neighbor_sets], dtype=dtype)
    scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0).astype(dtype)[:, None]
    return ag.sum_(grid, axis=1) * scale


def qualifier_arrays(qualifier_lists: Sequence[Sequence[tuple[int, int]]]) -> tuple[np.ndarray, np.ndarray]:
    """Canonically sorted (B, Q, 2) id array and (B, Q) validity mask."""
    b = len(qualifier_lists)
    width = max((len(q) for q in qualifier_lists), default=0)
    ids = np.zeros((b, max(width, 1), 2), dtype=np.int64)
    valid = np.zeros((b, max(width, 1)), dtype=bool)
    for row, quals in enumerate(qualifier_lists):
        for j, pair in enumerate(sorted(quals)):
            ids[row, j] = pair
            valid[row, j] = True
    return ids, valid


def aggregate_relation_qualifiers(qualifier_lists: Sequence[Sequence[tuple[int, int]]], kind,
                                  entity_emb: Tensor, relation_emb: Tensor) -> Tensor:
    """Mean of the composed (qualifier relation, qualifier entity) vectors per row; zero when empty."""
    ids, valid = qualifier_arrays(qualifier_lists)
    dtype = entity_emb.dtype
    q_r = ag.embedding(relation_emb, ids[..., 0])
    q_e = ag.embedding(entity_emb, ids[..., 1])
    theta = compose(kind, q_r, q_e) * valid[..., None].astype(dtype)
    counts = valid.sum(axis=1)
    scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0).astype(dtype)[:, None]
    return ag.sum_(theta, axis=1) * scale
