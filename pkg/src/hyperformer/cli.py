"""``hyperformer`` command line: stats, slice, train, eval, flops, gradcheck, synth.

Every command prints JSON on success.  Failures print a single line
``error: <kind>: <message>`` on stderr and exit with status 1.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .checkpoint import load_model, save_model
from .config import dump_config, load_config
from .data import (
    SPLITS, DatasetBundle, add_inverse_relations, build_filter_index, compute_stats, load_bundle,
    parse_statement_file, save_bundle, slice_bundle,
)
from .encoder import count_flops, count_params
from .evaluation import evaluate
from .hkg import Vocabulary, intern
from .model import count_model_params
from .aggregators import sequence_length

THREADS_ENV = "HYPERFORMER_THREADS"


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def read_inputs(paths: list[str]) -> DatasetBundle:
    """A single directory is a dataset; otherwise files named train/valid/test."""
    if len(paths) == 1 and Path(paths[0]).is_dir():
        return load_bundle(paths[0])
    vocab = Vocabulary()
    splits: dict[str, list] = {name: [] for name in SPLITS}
    for p in paths:
        stem = Path(p).stem
        if stem not in splits:
            raise ValueError(f"cannot tell the split of {p}; name it train/valid/test")
        splits[stem] = [intern(t, vocab) for t in parse_statement_file(p)]
    return DatasetBundle(splits["train"], splits["valid"], splits["test"], vocab,
                         provenance={"source": [str(p) for p in paths]})


def cmd_stats(args) -> None:
    _emit(compute_stats(read_inputs(args.paths)).to_dict())


def cmd_slice(args) -> None:
    bundle = slice_bundle(read_inputs(args.paths), args.mode, args.value, args.seed)
    save_bundle(bundle, args.out)
    _emit({"out": str(args.out), **{name: len(bundle.split(name)) for name in SPLITS}})


def cmd_train(args) -> None:
    from .train import fit

    model_cfg, train_cfg = load_config(args.config)
    if args.seed is not None:
        model_cfg.seed = train_cfg.seed = args.seed
    if args.epochs is not None:
        train_cfg.epochs = args.epochs
    bundle = load_bundle(args.data_dir, carve_valid=args.carve_valid, seed=train_cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(model_cfg, train_cfg) + f"seed = {train_cfg.seed}\n")
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as log:
        def on_epoch(entry):
            log.write(json.dumps(entry, sort_keys=True) + "\n")
            log.flush()

        result = fit(bundle, model_cfg, train_cfg, on_epoch)
    vocab = result.bundle.vocab
    meta = {
        "entities": vocab.entities.tokens,
        "relations": vocab.relations.tokens,
        "num_base_relations": result.bundle.num_base_relations,
        "train_config": asdict(train_cfg),
        "best_epoch": result.best_epoch,
    }
    save_model(out / "checkpoint", result.model, meta)
    summary = {"checkpoint": str(out / "checkpoint"), "epochs": train_cfg.epochs, "best_epoch": result.best_epoch,
               "final_train_loss": result.history[-1]["train_loss"]}
    if result.best_valid is not None:
        summary["best_valid"] = result.best_valid.to_dict()
    _emit(summary)


def cmd_eval(args) -> None:
    model, meta = load_model(args.checkpoint)
    bundle = add_inverse_relations(load_bundle(args.data_dir))
    if bundle.vocab.entities.tokens != meta["entities"] or bundle.vocab.relations.tokens != meta["relations"]:
        raise ValueError(f"vocabulary of {args.data_dir} does not match the checkpoint")
    model.attach(bundle.graph)
    index = build_filter_index(bundle.train, bundle.valid, bundle.test)
    report = evaluate(model, bundle.split(args.split), index, filtered=not args.raw,
                      num_base_relations=bundle.num_base_relations, batch_size=args.batch_size,
                      dump_path=args.dump)
    _emit(report.to_dict())


def cmd_flops(args) -> None:
    model_cfg, _ = load_config(args.config)
    seq_len = args.seq_len or sequence_length(model_cfg.max_qualifiers)
    moe_cfg = replace(model_cfg, ffn="moe").encoder_config()
    dense_cfg = replace(model_cfg, ffn="dense").encoder_config()
    report = {"seq_len": seq_len, "flops": count_flops(moe_cfg, seq_len),
              "params": {"dense": count_params(dense_cfg), "moe": count_params(moe_cfg)}}
    if args.entities is not None and args.relations is not None:
        report["model_params"] = count_model_params(model_cfg, args.entities, args.relations)
    _emit(report)


def cmd_gradcheck(args) -> None:
    from .gradcheck import TOLERANCE, run

    errors = run(args.module)
    _emit({"max_relative_error": errors, "tolerance": TOLERANCE})
    worst = max(errors.values())
    if worst > TOLERANCE:
        raise ArithmeticError(f"gradient check failed: max relative error {worst:.3e} > {TOLERANCE}")


def cmd_synth(args) -> None:
    from .synth import SyntheticSpec, generate

    spec = {}
    if args.spec:
        text = Path(args.spec).read_text() if Path(args.spec).is_file() else args.spec
        spec = json.loads(text)
    if args.seed is not None:
        spec["seed"] = args.seed
    bundle = generate(SyntheticSpec(**spec))
    save_bundle(bundle, args.out)
    _emit({"out": str(args.out), "spec": bundle.provenance["synthetic"],
           **{name: len(bundle.split(name)) for name in SPLITS}})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperformer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics as JSON")
    p.add_argument("paths", nargs="+", help="a dataset directory or split files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("slice", help="scenario slices (percentage, qualifier count, head degree)")
    p.add_argument("paths", nargs="+")
    p.add_argument("--mode", required=True, choices=["percentage", "qualifier", "degree"])
    p.add_argument("--value", required=True, type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("train", help="train a model and write a checkpoint plus metrics.jsonl")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--carve-valid", type=float, default=0.0,
                   help="fraction of train moved to validation when no valid split exists")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank a split with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test", choices=list(SPLITS))
    p.add_argument("--raw", action="store_true", help="unfiltered ranking")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--dump", help="per-query rank CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="analytic FLOPs and parameter counts, dense vs MoE")
    p.add_argument("--config", required=True)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--entities", type=int)
    p.add_argument("--relations", type=int)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks at d=8")
    p.add_argument("--module", default="all", choices=["all", "composition", "aggregators", "cbi", "moe", "full"])
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="qualifier-disambiguation synthetic dataset")
    p.add_argument("--spec", help="JSON object (inline or file) of SyntheticSpec fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            args.func(args)
    except Exception as exc:  # one line, machine-parsable
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
