"""Convolution-based bidirectional interaction between relation, neighbour and qualifier vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .layers import Linear, Module, xavier


@dataclass
class CbiConfig:
    channels: int = 96
    kernel: int = 9
    input_dropout: float = 0.2
    hidden_dropout: float = 0.5
    grid_rows: int | None = None
    padding: str = "circular"


def grid_shape(d: int, rows: int | None = None) -> tuple[int, int]:
    """Factor ``d`` as rows x cols; default is the pair closest to square with rows <= cols."""
    if rows is not None:
        if rows <= 0 or d % rows:
            raise ValueError(f"dimension {d} is not divisible into {rows} grid rows")
        return rows, d // rows
    r = int(np.floor(np.sqrt(d)))
    while d % r:
        r -= 1
    return r, d // r


def checkered(x: Tensor, y: Tensor, rows: int, cols: int) -> Tensor:
    """(B, d), (B, d) -> (B, 1, 2*rows, cols) with rows alternating x, y."""
    b = x.shape[0]
    xs = ag.reshape(x, (b, rows, 1, cols))
    ys = ag.reshape(y, (b, rows, 1, cols))
    return ag.reshape(ag.concat([xs, ys], axis=2), (b, 1, 2 * rows, cols))


class PairInteraction(Module):
    """Conv over the checkered map of two vectors, then one affine layer to 2d."""

    def __init__(self, d: int, cfg: CbiConfig, rng: np.random.Generator, dtype=np.float64):
        self.rows, self.cols = grid_shape(d, cfg.grid_rows)
        k = cfg.kernel
        fan = k * k
        self.kernel = Parameter((rng.standard_normal((cfg.channels, 1, k, k)) * np.sqrt(1.0 / fan)).astype(dtype))
        self.conv_bias = Parameter(np.zeros(cfg.channels, dtype=dtype))
        self.pint = Linear(cfg.channels * 2 * d, 2 * d, rng, dtype)
        self.cfg = cfg
        self.d = d

    @property
    def feature_size(self) -> int:
        return self.cfg.channels * 2 * self.d

    def conv_interact(self, x: Tensor, y: Tensor, training: bool = False, rng=None) -> Tensor:
        if x.shape != y.shape or x.shape[-1] != self.d:
            raise ag.ShapeError(f"conv_interact: expected two (B, {self.d}) inputs, got {x.shape} and {y.shape}")
        grid = checkered(x, y, self.rows, self.cols)
        grid = ag.dropout(grid, self.cfg.input_dropout, training, rng)
        fmap = ag.conv2d(grid, self.kernel, self.conv_bias, padding=self.cfg.padding)
        feats = ag.reshape(fmap, (x.shape[0], self.feature_size))
        return ag.dropout(feats, self.cfg.hidden_dropout, training, rng)

    def pint_forward(self, features: Tensor) -> tuple[Tensor, Tensor]:
        out = self.pint(features)
        return out[:, : self.d], out[:, self.d:]

    def __call__(self, x: Tensor, y: Tensor, training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        return self.pint_forward(self.conv_interact(x, y, training, rng))


class Gate(Module):
    """``alpha * a + (1 - alpha) * b`` with ``alpha = sigmoid(a W1 + b W2 + b1 + b2)``."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float64):
        self.w1 = Parameter(xavier(rng, d, d, dtype))
        self.w2 = Parameter(xavier(rng, d, d, dtype))
        self.b1 = Parameter(np.zeros(d, dtype=dtype))
        self.b2 = Parameter(np.zeros(d, dtype=dtype))

    def alpha(self, a: Tensor, b: Tensor) -> Tensor:
        return ag.sigmoid(ag.matmul(a, self.w1) + ag.matmul(b, self.w2) + self.b1 + self.b2)

    def __call__(self, a: Tensor, b: Tensor) -> Tensor:
        alpha = self.alpha(a, b)
        return alpha * a + (1.0 - alpha) * b


class CBI(Module):
    """Three pairwise interactions and three gates; separate weights per pair."""

    def __init__(self, d: int, cfg: CbiConfig, rng: np.random.Generator, dtype=np.float64):
        self.rel_nei = PairInteraction(d, cfg, rng, dtype)
        self.rel_qual = PairInteraction(d, cfg, rng, dtype)
        self.nei_qual = PairInteraction(d, cfg, rng, dtype)
        self.gate_rel = Gate(d, rng, dtype)
        self.gate_nei = Gate(d, rng, dtype)
        self.gate_qual = Gate(d, rng, dtype)
        self.d = d

    def __call__(self, rel: Tensor, nei: Tensor, qual: Tensor, training: bool = False, rng=None
                 ) -> tuple[Tensor, Tensor]:
        """Return the enhanced (entity, relation) vectors from relation, neighbour and qualifier inputs."""
        if not (rel.shape == nei.shape == qual.shape):
            raise ag.ShapeError(f"cbi: mismatched inputs {rel.shape}, {nei.shape}, {qual.shape}")
        r_from_nei, nei_from_r = self.rel_nei(rel, nei, training, rng)
        r_from_qual, qual_from_r = self.rel_qual(rel, qual, training, rng)
        nei_from_qual, qual_from_nei = self.nei_qual(nei, qual, training, rng)
        rel_out = self.gate_rel(r_from_nei, r_from_qual)
        ent_out = self.gate_nei(nei_from_r, nei_from_qual)
        qual_out = self.gate_qual(qual_from_r, qual_from_nei)
        return ent_out, rel_out + qual_out


def cbi_forward(cbi: CBI, rel: Tensor, nei: Tensor, qual: Tensor, **kw) -> tuple[Tensor, Tensor]:
    return cbi(rel, nei, qual, **kw)


def count_cbi_params(d: int, cfg: CbiConfig) -> int:
    pair = cfg.channels * cfg.kernel**2 + cfg.channels + cfg.channels * 2 * d * 2 * d + 2 * d
    gate = 2 * d * d + 2 * d
    return 3 * pair + 3 * gate
