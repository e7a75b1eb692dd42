"""Hyper-relational knowledge graph data model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class MalformedStatement(ValueError):
    pass


class Vocab:
    """Bijection between surface tokens and dense integer ids."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._tokens: list[str] = []
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self._ids.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._ids[token] = idx
            self._tokens.append(token)
        return idx

    def id(self, token: str) -> int:
        return self._ids[token]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def get(self, token: str, default=None):
        return self._ids.get(token, default)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def copy(self) -> "Vocab":
        return Vocab(self._tokens)


@dataclass(frozen=True)
class Statement:
    head: int
    relation: int
    tail: int
    qualifiers: tuple[tuple[int, int], ...] = ()

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.head, self.relation, self.tail)

    @property
    def is_qualified(self) -> bool:
        return bool(self.qualifiers)


@dataclass
class Vocabulary:
    """Disjoint entity and relation id spaces shared by main triples and qualifiers."""

    entities: Vocab = field(default_factory=Vocab)
    relations: Vocab = field(default_factory=Vocab)

    def copy(self) -> "Vocabulary":
        return Vocabulary(self.entities.copy(), self.relations.copy())

    def decode(self, s: Statement) -> tuple[str, ...]:
        out = [self.entities.token(s.head), self.relations.token(s.relation), self.entities.token(s.tail)]
        for qr, qe in s.qualifiers:
            out += [self.relations.token(qr), self.entities.token(qe)]
        return tuple(out)


def intern(tokens: Sequence[str], vocab: Vocabulary) -> Statement:
    """Map surface tokens ``(h, r, t, qr1, qe1, ...)`` to a :class:`Statement`."""
    if len(tokens) < 3:
        raise MalformedStatement(f"need at least 3 tokens (head, relation, tail), got {len(tokens)}")
    if (len(tokens) - 3) % 2:
        raise MalformedStatement(f"unpaired qualifier token {tokens[-1]!r}")
    ents, rels = vocab.entities, vocab.relations
    head = ents.add(tokens[0])
    rel = rels.add(tokens[1])
    tail = ents.add(tokens[2])
    quals = tuple((rels.add(tokens[i]), ents.add(tokens[i + 1])) for i in range(3, len(tokens), 2))
    return Statement(head, rel, tail, quals)


class HkgGraph:
    """Immutable statement store with a head-entity neighbour index."""

    def __init__(self, statements: Sequence[Statement], vocab: Vocabulary):
        self.statements: tuple[Statement, ...] = tuple(statements)
        self.vocab = vocab
        index: dict[int, list[int]] = {}
        for i, s in enumerate(self.statements):
            index.setdefault(s.head, []).append(i)
        self.neighbor_index: dict[int, tuple[int, ...]] = {h: tuple(v) for h, v in index.items()}
        self._orders: dict[tuple, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.statements)

    @property
    def num_entities(self) -> int:
        return len(self.vocab.entities)

    @property
    def num_relations(self) -> int:
        return len(self.vocab.relations)

    def degree(self, h: int) -> int:
        return len(self.neighbor_index.get(h, ()))

    def neighbor_ids(
        self,
        h: int,
        limit: int,
        seed: int = 0,
        epoch: int | None = None,
        exclude: int | None = None,
    ) -> list[int]:
        """Indices of at most ``limit`` statements headed by ``h``.

        The pool is shuffled once per ``(seed, h)`` (or ``(seed, h, epoch)``
        when ``epoch`` is given) with a counter-based generator, so the sample
        is a uniform draw that is stable across calls.  ``exclude`` removes one
        statement index from the pool.  Result is sorted.
        """
        pool = self.neighbor_index.get(h, ())
        if not pool or limit <= 0:
            return []
        n_avail = len(pool) - (1 if exclude is not None and exclude in pool else 0)
        if n_avail <= limit:
            return [i for i in pool if i != exclude]
        order = self._shuffled(h, seed, epoch)
        picked = []
        for i in order:
            if i != exclude:
                picked.append(int(i))
                if len(picked) == limit:
                    break
        return sorted(picked)

    def _shuffled(self, h: int, seed: int, epoch: int | None) -> np.ndarray:
        key = (h, seed, epoch)
        order = self._orders.get(key)
        if order is None:
            entropy = [seed, h] if epoch is None else [seed, h, epoch]
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
            order = rng.permutation(np.asarray(self.neighbor_index[h]))
            self._orders[key] = order
        return order


def neighbors(
    graph: HkgGraph,
    h: int,
    limit: int,
    seed: int = 0,
    epoch: int | None = None,
    exclude: int | None = None,
) -> list[Statement]:
    return [graph.statements[i] for i in graph.neighbor_ids(h, limit, seed, epoch, exclude)]


def degree(graph: HkgGraph, h: int) -> int:
    return graph.degree(h)


def qualifier_ratio(statements: Sequence[Statement]) -> float:
    """Fraction of statements carrying at least one qualifier pair (0 for empty input)."""
    if not statements:
        return 0.0
    return sum(1 for s in statements if s.qualifiers) / len(statements)
