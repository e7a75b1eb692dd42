"""Checkpoint container: ``params.bin`` (concatenated row-major tensors) + ``manifest.json``."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT = "hyperformer-checkpoint"
VERSION = 1


def save_tensors(path: str | os.PathLike, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(path / "params.bin", "wb") as fh:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
            fh.write(payload)
            entries.append({"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(payload)})
            offset += len(payload)
    manifest = {"format": FORMAT, "version": VERSION, "tensors": entries, "meta": meta or {}}
    with open(path / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_tensors(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT}")
    blob = (path / "params.bin").read_bytes()
    tensors = {}
    for e in manifest["tensors"]:
        dtype = np.dtype(e["dtype"]).newbyteorder("<")
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype=dtype).reshape(e["shape"]).astype(e["dtype"])
    return tensors, manifest.get("meta", {})


def save_model(path: str | os.PathLike, model, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta["model_config"] = model.config.to_dict()
    meta["num_entities"] = model.num_entities
    meta["num_relations"] = model.num_relations
    save_tensors(path, {name: p.data for name, p in model.named_parameters()}, meta)


def load_model(path: str | os.PathLike):
    from .model import HyperFormerModel, ModelConfig

    tensors, meta = load_tensors(path)
    cfg = ModelConfig.from_dict(meta["model_config"])
    model = HyperFormerModel(cfg, meta["num_entities"], meta["num_relations"])
    params = dict(model.named_parameters())
    if set(params) != set(tensors):
        missing = sorted(set(params) ^ set(tensors))
        raise ValueError(f"checkpoint/model parameter mismatch: {missing[:5]}")
    for name, p in params.items():
        if p.data.shape != tensors[name].shape:
            raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {tensors[name].shape}")
        p.data = np.array(tensors[name], copy=True)
        p.zero_grad()
    return model, meta
