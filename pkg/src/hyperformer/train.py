"""AdamW, warm-up + cosine schedule, and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autograd as ag
from .config import TrainConfig
from .data import DatasetBundle, add_inverse_relations, build_filter_index
from .evaluation import RankingReport, evaluate
from .model import HyperFormerModel, ModelConfig, loss as model_loss

log = logging.getLogger(__name__)


class AdamW:
    """Adaptive moments with bias correction and decoupled weight decay."""

    def __init__(self, params, lr: float = 6e-4, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p.data
            p.data -= (self.lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warm-up from 0 to ``base_lr``, then cosine decay to 0 at ``total_steps``."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps <= warmup_steps:
        return base_lr
    progress = min(1.0, (step - warmup_steps) / (total_steps - warmup_steps))
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class FitResult:
    model: HyperFormerModel
    bundle: DatasetBundle
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_valid: RankingReport | None = None


def _snapshot(model) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def _restore(model, arrays) -> None:
    for p, a in zip(model.parameters(), arrays):
        p.data = a.copy()


def fit(
    bundle: DatasetBundle,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> FitResult:
    """Train on every training statement and its inverse twin (all tail queries).

    Validation MRR is pooled over both directions; the parameters from the best
    validation epoch are restored at the end.  ``on_epoch`` may return True to
    stop early.
    """
    if bundle.inverse is None:
        bundle = add_inverse_relations(bundle)
    items = list(bundle.train)
    if not items:
        raise ValueError("empty training split")
    model = HyperFormerModel(model_cfg, bundle.num_entities, bundle.num_relations).attach(bundle.graph)
    opt = AdamW(model.parameters(), train_cfg.learning_rate, (train_cfg.beta1, train_cfg.beta2),
                train_cfg.adam_eps, train_cfg.weight_decay)
    steps_per_epoch = math.ceil(len(items) / train_cfg.batch_size)
    total = train_cfg.epochs * steps_per_epoch
    warmup = int(round(train_cfg.warmup_fraction * total))
    shuffle_rng = np.random.default_rng([train_cfg.seed, 1])
    dropout_rng = np.random.default_rng([train_cfg.seed, 2])
    filters = build_filter_index(bundle.train, bundle.valid, bundle.test) if bundle.valid else None

    result = FitResult(model, bundle)
    best_snapshot = None
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(items))
        total_loss = 0.0
        lr = 0.0
        for lo in range(0, len(items), train_cfg.batch_size):
            idx = order[lo:lo + train_cfg.batch_size]
            lr = lr_schedule(step, total, warmup, train_cfg.learning_rate)
            opt.lr = lr
            batch = model.make_batch([items[i] for i in idx], epoch)
            value = model_loss(model, batch, train_cfg.label_smoothing, training=True, rng=dropout_rng)
            opt.zero_grad()
            ag.backward(value)
            opt.step()
            total_loss += float(value.data) * len(idx)
            step += 1
        entry = {"epoch": epoch, "train_loss": total_loss / len(items), "valid_mrr": None,
                 "valid_hits1": None, "lr": lr}
        if filters is not None and (epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs):
            report = evaluate(model, bundle.valid, filters, True, bundle.num_base_relations,
                              train_cfg.eval_batch_size)
            entry["valid_mrr"], entry["valid_hits1"] = report.mrr, report.hits1
            if result.best_valid is None or report.mrr > result.best_valid.mrr:
                result.best_valid, result.best_epoch = report, epoch
                best_snapshot = _snapshot(model)
        result.history.append(entry)
        log.info("epoch %d loss %.4f valid_mrr %s", epoch, entry["train_loss"], entry["valid_mrr"])
        if on_epoch is not None and on_epoch(entry):
            break
    if best_snapshot is not None:
        _restore(model, best_snapshot)
    return result

