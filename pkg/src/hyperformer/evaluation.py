"""Filtered ranking metrics for tail (and, via inverse relations, head) prediction."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .data import filter_key
from .hkg import Statement


def rank_target(scores: np.ndarray, true_id: int, filter_set: Iterable[int] = ()) -> int:
    """Rank of ``true_id`` after removing other known-true entities.

    Ties count half: ``1 + #greater + ceil(#equal / 2)`` (``#equal`` excludes
    the target itself).
    """
    scores = np.asarray(scores)
    if not 0 <= true_id < scores.shape[0]:
        raise IndexError(f"true id {true_id} out of range for {scores.shape[0]} candidates")
    keep = np.ones(scores.shape[0], dtype=bool)
    others = [e for e in filter_set if e != true_id]
    if others:
        keep[others] = False
    target = scores[true_id]
    cand = scores[keep]
    greater = int(np.count_nonzero(cand > target))
    equal = int(np.count_nonzero(cand == target)) - 1
    return 1 + greater + (equal + 1) // 2


def mrr(ranks: Sequence[int]) -> float:
    if not len(ranks):
        return 0.0
    total = sum((Fraction(1, int(r)) for r in ranks), Fraction(0))
    return float(total / len(ranks))


def hits_at(ranks: Sequence[int], n: int) -> float:
    if not len(ranks):
        return 0.0
    return sum(1 for r in ranks if r <= n) / len(ranks)


@dataclass
class RankingReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    filtered: bool = True
    per_direction: dict = field(default_factory=dict)

    @classmethod
    def from_ranks(cls, ranks: Sequence[int], filtered: bool = True, per_direction=None) -> "RankingReport":
        return cls(mrr(ranks), hits_at(ranks, 1), hits_at(ranks, 3), hits_at(ranks, 10), len(ranks),
                   filtered, per_direction or {})

    def to_dict(self) -> dict:
        return asdict(self)


def rank_queries(
    model,
    queries: Sequence[Statement],
    filter_index: dict | None = None,
    filtered: bool = True,
    batch_size: int = 256,
) -> list[int]:
    """Tail rank of every query statement; ``model.scores`` gives (B, |V|) scores."""
    ranks = []
    for lo in range(0, len(queries), batch_size):
        chunk = list(queries[lo:lo + batch_size])
        scores = np.asarray(model.scores(chunk))
        for row, s in zip(scores, chunk):
            known = filter_index.get(filter_key(s, "tail"), ()) if (filtered and filter_index) else ()
            ranks.append(rank_target(row, s.tail, known))
    return ranks


def evaluate(
    model,
    queries: Sequence[Statement],
    filter_index: dict | None = None,
    filtered: bool = True,
    num_base_relations: int | None = None,
    batch_size: int = 256,
    dump_path: str | None = None,
) -> RankingReport:
    """Pooled report over tail queries.

    With inverse relations present, queries whose relation id is at least
    ``num_base_relations`` are head predictions in disguise and are reported
    under the ``head`` direction.
    """
    queries = list(queries)
    ranks = rank_queries(model, queries, filter_index, filtered, batch_size)
    directions = ["head" if num_base_relations is not None and s.relation >= num_base_relations else "tail"
                  for s in queries]
    per = {}
    for name in ("tail", "head"):
        sub = [r for r, d in zip(ranks, directions) if d == name]
        if sub:
            per[name] = RankingReport.from_ranks(sub, filtered).to_dict()
            per[name].pop("per_direction")
    if dump_path is not None:
        with open(dump_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "direction", "head", "relation", "tail", "rank"])
            for i, (s, d, r) in enumerate(zip(queries, directions, ranks)):
                w.writerow([i, d, s.head, s.relation, s.tail, r])
    return RankingReport.from_ranks(ranks, filtered, per)


def expected_random_mrr(num_candidates: int) -> float:
    """Mean reciprocal rank of a uniformly random ordering: H_n / n."""
    return sum(1.0 / k for k in range(1, num_candidates + 1)) / num_candidates


def tie_ceiling_mrr(b: int) -> float:
    """Best MRR when the target is indistinguishable from ``b - 1`` others."""
    return sum(1.0 / k for k in range(1, b + 1)) / b

