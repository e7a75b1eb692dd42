"""Synthetic hyper-relational data where qualifiers decide the answer.

Head and tail entities are split into groups of ``b``.  Head ``i`` of group
``g`` meets tail ``(i + j) mod b`` of group ``g`` through a qualifier whose
value entity is ``v_j``.  Each sampled ``(head, relation)`` context receives
all ``b`` completions.  A context is a ``(group, relation)`` pair covering
every head of the group, so without qualifiers the tail (and, symmetrically,
the head) is one of ``b`` equally plausible candidates and the relation says
nothing about the answer.  Contexts are split between train, valid and test;
every group keeps at least one training context.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetBundle
from .hkg import Statement, Vocabulary, intern


@dataclass(frozen=True)
class SyntheticSpec:
    entities: int = 200
    relations: int = 20
    qualifier_keys: int = 2
    branching: int = 4
    contexts_per_group: int = 6
    # cap on the total number of (head, relation) contexts; None keeps all
    contexts: int | None = None
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.branching < 2:
            raise ValueError("branching factor must be at least 2")
        if not 1 <= self.qualifier_keys < self.relations:
            raise ValueError("need at least one qualifier key and one main relation")
        if self.groups < 1:
            raise ValueError(f"{self.entities} entities too few for branching {self.branching}")
        if not 1 <= self.contexts_per_group <= self.main_relations:
            raise ValueError("contexts per group must be between 1 and the number of main relations")

    @property
    def groups(self) -> int:
        return (self.entities - self.branching) // (2 * self.branching)

    @property
    def main_relations(self) -> int:
        return self.relations - self.qualifier_keys


def generate(spec: SyntheticSpec) -> DatasetBundle:
    b = spec.branching
    rng = np.random.default_rng([spec.seed, 0x51])
    vocab = Vocabulary()
    heads = [f"h{i}" for i in range(spec.groups * b)]
    tails = [f"t{i}" for i in range(spec.groups * b)]
    values = [f"v{j}" for j in range(b)]
    spare = [f"x{i}" for i in range(spec.entities - len(heads) - len(tails) - b)]
    for tok in heads + tails + values + spare:
        vocab.entities.add(tok)
    main = [f"r{i}" for i in range(spec.main_relations)]
    keys = [f"q{i}" for i in range(spec.qualifier_keys)]
    for tok in main + keys:
        vocab.relations.add(tok)

    contexts = []  # (group, relation index, split)
    for group in range(spec.groups):
        rels = rng.choice(spec.main_relations, size=spec.contexts_per_group, replace=False)
        for n, r in enumerate(rels):
            contexts.append([group, int(r), None if n else "train"])
    if spec.contexts is not None and spec.contexts < len(contexts):
        keep = np.sort(rng.choice(len(contexts), size=spec.contexts, replace=False))
        contexts = [contexts[i] for i in keep]
        for c in contexts:
            c[2] = None
        seen = set()
        for c in contexts:
            if c[0] not in seen:
                seen.add(c[0])
                c[2] = "train"
    for c in contexts:
        if c[2] is None:
            u = rng.random()
            c[2] = ("train" if u < spec.train_fraction
                    else "valid" if u < spec.train_fraction + spec.valid_fraction else "test")

    splits: dict[str, list[Statement]] = {"train": [], "valid": [], "test": []}
    for group, r, split in contexts:
        for i in range(b):
            for j in range(b):
                t = group * b + (i + j) % b
                key = keys[int(rng.integers(spec.qualifier_keys))]
                toks = (heads[group * b + i], main[r], tails[t], key, values[j])
                splits[split].append(intern(toks, vocab))
    return DatasetBundle(splits["train"], splits["valid"], splits["test"], vocab,
                         provenance={"synthetic": spec.__dict__.copy()})


def strip_qualifiers(statements):
    return [Statement(s.head, s.relation, s.tail) for s in statements]
