"""Statement files, dataset bundles, scenario slicers and filter indices."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hkg import HkgGraph, MalformedStatement, Statement, Vocabulary, intern, qualifier_ratio

SPLITS = ("train", "valid", "test")
INVERSE_SUFFIX = "_inverse"


def parse_statement_file(path: str | os.PathLike) -> list[tuple[str, ...]]:
    """Read comma-separated statements: ``head,relation,tail[,qr,qe]*``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = tuple(t.strip() for t in line.split(","))
            if len(tokens) < 3:
                raise MalformedStatement(f"{path}:{lineno}: fewer than 3 tokens")
            if (len(tokens) - 3) % 2:
                raise MalformedStatement(f"{path}:{lineno}: unpaired qualifier token {tokens[-1]!r}")
            out.append(tokens)
    return out


def write_statement_file(path: str | os.PathLike, statements: Iterable[Statement], vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in statements:
            fh.write(",".join(vocab.decode(s)) + "\n")


@dataclass
class DatasetBundle:
    train: list[Statement]
    valid: list[Statement]
    test: list[Statement]
    vocab: Vocabulary
    provenance: dict = field(default_factory=dict)
    # relation id -> inverse relation id, set by add_inverse_relations
    inverse: dict[int, int] | None = None
    _graph: HkgGraph | None = field(default=None, repr=False)

    @property
    def graph(self) -> HkgGraph:
        """Neighbour graph over the training split only."""
        if self._graph is None:
            self._graph = HkgGraph(self.train, self.vocab)
        return self._graph

    @property
    def num_entities(self) -> int:
        return len(self.vocab.entities)

    @property
    def num_relations(self) -> int:
        return len(self.vocab.relations)

    @property
    def num_base_relations(self) -> int:
        return self.num_relations // 2 if self.inverse is not None else self.num_relations

    def split(self, name: str) -> list[Statement]:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_statements(self) -> list[Statement]:
        return self.train + self.valid + self.test

    def is_inverse(self, relation: int) -> bool:
        return self.inverse is not None and relation >= self.num_base_relations

    def originals(self, statements: Sequence[Statement]) -> list[Statement]:
        return [s for s in statements if not self.is_inverse(s.relation)]


def _find_split_file(data_dir: Path, name: str) -> Path | None:
    for ext in (".csv", ".txt"):
        p = data_dir / f"{name}{ext}"
        if p.exists():
            return p
    return None


def load_bundle(
    data_dir: str | os.PathLike,
    strict: bool = False,
    carve_valid: float = 0.0,
    seed: int = 0,
) -> DatasetBundle:
    """Load ``train``/``valid``/``test`` (``.csv`` or ``.txt``) from a directory.

    A missing validation file is tolerated; with ``carve_valid > 0`` a seeded
    fraction of train is moved into validation instead.
    """
    data_dir = Path(data_dir)
    vocab = Vocabulary()
    splits: dict[str, list[Statement]] = {}
    for name in SPLITS:
        path = _find_split_file(data_dir, name)
        if path is None:
            if name == "train":
                raise FileNotFoundError(f"no train split in {data_dir}")
            splits[name] = []
            continue
        splits[name] = [intern(toks, vocab) for toks in parse_statement_file(path)]
    if strict:
        seen: set[Statement] = set()
        for name in SPLITS:
            for s in splits[name]:
                if s in seen:
                    raise MalformedStatement(f"duplicate statement {vocab.decode(s)} in {name}")
                seen.add(s)
    bundle = DatasetBundle(splits["train"], splits["valid"], splits["test"], vocab,
                           provenance={"source": str(data_dir)})
    if not bundle.valid and carve_valid > 0:
        bundle = carve_validation(bundle, carve_valid, seed)
    return bundle


def save_bundle(bundle: DatasetBundle, out_dir: str | os.PathLike) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        write_statement_file(out_dir / f"{name}.csv", bundle.originals(bundle.split(name)), bundle.vocab)


def carve_validation(bundle: DatasetBundle, fraction: float, seed: int) -> DatasetBundle:
    rng = np.random.default_rng([seed, 1])
    n = len(bundle.train)
    n_valid = int(round(n * fraction))
    chosen = set(rng.choice(n, size=n_valid, replace=False).tolist())
    train = [s for i, s in enumerate(bundle.train) if i not in chosen]
    valid = [s for i, s in enumerate(bundle.train) if i in chosen]
    prov = dict(bundle.provenance, carved_valid=fraction, seed=seed)
    return replace(bundle, train=train, valid=valid, provenance=prov, _graph=None)


def twin(s: Statement, inverse: dict[int, int]) -> Statement:
    return Statement(s.tail, inverse[s.relation], s.head, s.qualifiers)


def add_inverse_relations(bundle: DatasetBundle) -> DatasetBundle:
    """Intern ``r_inverse`` for every relation and add a reversed twin of each statement.

    Twins follow their originals within each split.  Inverse ids are
    ``r + R`` so the map is an involution.
    """
    if bundle.inverse is not None:
        raise ValueError("inverse relations already added")
    vocab = bundle.vocab.copy()
    n_rel = len(vocab.relations)
    inverse: dict[int, int] = {}
    for r in range(n_rel):
        tok = vocab.relations.token(r) + INVERSE_SUFFIX
        if tok in vocab.relations:
            raise ValueError(f"relation token {tok!r} already exists")
        rinv = vocab.relations.add(tok)
        inverse[r] = rinv
        inverse[rinv] = r

    def doubled(statements):
        out = []
        for s in statements:
            out.append(s)
            out.append(twin(s, inverse))
        return out

    return DatasetBundle(doubled(bundle.train), doubled(bundle.valid), doubled(bundle.test), vocab,
                         provenance=dict(bundle.provenance, inverse=True), inverse=inverse)


# ------------------------------------------------------------------ scenario slicers


def _sample(rng: np.random.Generator, items: Sequence[int], k: int) -> list[int]:
    return sorted(rng.choice(np.asarray(items), size=k, replace=False).tolist())


def slice_fixed_percentage(statements: Sequence[Statement], p: float, seed: int) -> list[Statement]:
    """Keep every qualified statement plus a seeded sample of bare ones so the ratio is ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"target fraction must be in (0, 1], got {p}")
    qualified = [i for i, s in enumerate(statements) if s.qualifiers]
    bare = [i for i, s in enumerate(statements) if not s.qualifiers]
    q = len(qualified)
    if q == 0:
        raise ValueError("no qualified statements to anchor the percentage")
    need = int(math.floor(q * (1.0 - p) / p + 1e-9))
    if need > len(bare):
        raise ValueError(f"fraction {p} needs {need} bare statements but only {len(bare)} available")
    rng = np.random.default_rng([seed, 0xF1])
    keep = set(qualified)
    if need == len(bare):
        keep.update(bare)
    elif need:
        keep.update(_sample(rng, bare, need))
    return [s for i, s in enumerate(statements) if i in keep]


def slice_fixed_qualifier(statements: Sequence[Statement], n: int) -> list[Statement]:
    return [s for s in statements if len(s.qualifiers) == n]


def slice_low_degree(statements: Sequence[Statement], k: int, seed: int) -> list[Statement]:
    """Cap every head entity's out-degree at ``k`` by seeded uniform subsampling."""
    if k <= 0:
        raise ValueError("degree cap must be positive")
    by_head: dict[int, list[int]] = {}
    for i, s in enumerate(statements):
        by_head.setdefault(s.head, []).append(i)
    keep: set[int] = set()
    for h, idx in by_head.items():
        if len(idx) <= k:
            keep.update(idx)
        else:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, h])))
            keep.update(_sample(rng, idx, k))
    return [s for i, s in enumerate(statements) if i in keep]


def slice_bundle(bundle: DatasetBundle, mode: str, value: float, seed: int) -> DatasetBundle:
    """Apply one slicer to every split independently with the same seed."""
    if bundle.inverse is not None:
        raise ValueError("slice before adding inverse relations")
    if mode == "percentage":
        fn = lambda xs: slice_fixed_percentage(xs, float(value), seed) if xs else []
    elif mode == "qualifier":
        fn = lambda xs: slice_fixed_qualifier(xs, int(value))
    elif mode == "degree":
        fn = lambda xs: slice_low_degree(xs, int(value), seed) if xs else []
    else:
        raise ValueError(f"unknown slice mode {mode!r}")
    prov = dict(bundle.provenance, slicer={"mode": mode, "value": value}, seed=seed)
    return DatasetBundle(fn(bundle.train), fn(bundle.valid), fn(bundle.test), bundle.vocab, provenance=prov)


# ------------------------------------------------------------------ statistics


@dataclass(frozen=True)
class DatasetStats:
    train: int = 0
    valid: int = 0
    test: int = 0
    entities: int = 0
    relations: int = 0
    entities_in_qualifiers: int = 0
    relations_in_qualifiers: int = 0
    qualifier_ratio: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_stats(bundle: DatasetBundle) -> DatasetStats:
    """Counts over all splits; inverse twins are ignored."""
    parts = {name: bundle.originals(bundle.split(name)) for name in SPLITS}
    everything = parts["train"] + parts["valid"] + parts["test"]
    ents, rels, qents, qrels = set(), set(), set(), set()
    for s in everything:
        ents.update((s.head, s.tail))
        rels.add(s.relation)
        for qr, qe in s.qualifiers:
            qrels.add(qr)
            qents.add(qe)
    ents |= qents
    rels |= qrels
    return DatasetStats(
        train=len(parts["train"]),
        valid=len(parts["valid"]),
        test=len(parts["test"]),
        entities=len(ents),
        relations=len(rels),
        entities_in_qualifiers=len(qents),
        relations_in_qualifiers=len(qrels),
        qualifier_ratio=qualifier_ratio(everything),
    )


# ------------------------------------------------------------------ filtered-ranking index

FilterKey = tuple


def filter_key(s: Statement, side: str = "tail") -> FilterKey:
    """Statement with the target slot removed; qualifiers as a sorted multiset."""
    quals = tuple(sorted(s.qualifiers))
    if side == "tail":
        return (s.relation, s.head, quals, "tail")
    if side == "head":
        return (s.relation, s.tail, quals, "head")
    raise ValueError(f"unknown side {side!r}")


def target_of(s: Statement, side: str = "tail") -> int:
    return s.tail if side == "tail" else s.head


def build_filter_index(*splits: Iterable[Statement]) -> dict[FilterKey, frozenset[int]]:
    index: dict[FilterKey, set[int]] = {}
    for split in splits:
        for s in split:
            for side in ("tail", "head"):
                index.setdefault(filter_key(s, side), set()).add(target_of(s, side))
    return {k: frozenset(v) for k, v in index.items()}
