"""Post-LN transformer encoder with sparse Mixture-of-Experts feed-forward sublayers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .layers import LayerNorm, Linear, Module, xavier

GATE_MODES = ("binary", "weighted")


@dataclass
class MoEConfig:
    experts: int = 64
    top_k: int = 2
    gate_mode: str = "binary"
    expert_activation: bool = False
    straight_through: bool = True

    def __post_init__(self):
        if not 1 <= self.top_k <= self.experts:
            raise ValueError(f"need 1 <= k <= n, got k={self.top_k}, n={self.experts}")
        if self.gate_mode not in GATE_MODES:
            raise ValueError(f"gate_mode must be one of {GATE_MODES}")


@dataclass
class EncoderConfig:
    layers: int = 8
    hidden: int = 400
    heads: int = 2
    input_dropout: float = 0.7
    hidden_dropout: float = 0.1
    # None selects the dense d -> 4d -> d feed-forward
    moe: MoEConfig | None = field(default_factory=MoEConfig)

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden size {self.hidden} not divisible by {self.heads} heads")


class Expert(Module):
    """``(x W + b) W' + b'`` with d x d weights; optional GELU between the maps."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float64, activation: bool = False):
        self.inner = Linear(d, d, rng, dtype)
        self.outer = Linear(d, d, rng, dtype)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        h = self.inner(x)
        if self.activation:
            h = ag.gelu(h)
        return self.outer(h)


def top_k_indices(probs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries per row; ties go to the lower index."""
    return np.argsort(-probs, axis=-1, kind="stable")[..., :k]


def binary_gate(probs: np.ndarray, k: int) -> np.ndarray:
    gate = np.zeros_like(probs)
    np.put_along_axis(gate, top_k_indices(probs, k), 1.0, axis=-1)
    return gate


class MoE(Module):
    def __init__(self, d: int, cfg: MoEConfig, rng: np.random.Generator, dtype=np.float64):
        self.w_gate = Parameter(xavier(rng, d, cfg.experts, dtype))
        self.experts = [Expert(d, rng, dtype, cfg.expert_activation) for _ in range(cfg.experts)]
        self.cfg = cfg
        self.evaluations = 0

    def gate_probs(self, x: Tensor) -> Tensor:
        return ag.softmax(ag.matmul(x, self.w_gate), axis=-1)

    def gate(self, x: Tensor) -> np.ndarray:
        """Binary gate vector(s): ones at the top-k experts."""
        return binary_gate(self.gate_probs(x).data, self.cfg.top_k)

    def expert_forward(self, x: Tensor, i: int) -> Tensor:
        return self.experts[i](x)

    def __call__(self, x: Tensor, selection: np.ndarray | None = None) -> Tensor:
        """Route each row of ``x`` (N, d) to its selected experts and sum their outputs.

        With ``selection`` given the routing is held fixed; in binary mode the
        coefficients are then constants.
        """
        cfg = self.cfg
        n_tok, d = x.shape
        fixed = selection is not None
        need_probs = cfg.gate_mode == "weighted" or (not fixed and cfg.straight_through)
        probs = self.gate_probs(x) if (need_probs or not fixed) else None
        if not fixed:
            selection = top_k_indices(probs.data, cfg.top_k)
        selection = np.asarray(selection)
        if selection.shape != (n_tok, cfg.top_k):
            raise ag.ShapeError(f"selection shape {selection.shape} != {(n_tok, cfg.top_k)}")

        coef = None
        if cfg.gate_mode == "weighted":
            coef = probs
        elif not fixed and cfg.straight_through:
            # forward value 1, backward gradient of the softmax weight
            coef = probs - ag.detach(probs) + 1.0

        rows_all, outs = [], []
        for i in range(len(self.experts)):
            rows, slots = np.nonzero(selection == i)
            if rows.size == 0:
                continue
            y = self.expert_forward(ag.take(x, rows), i)
            if coef is not None:
                y = y * ag.reshape(ag.take(coef, (rows, np.full_like(rows, i))), (-1, 1))
            rows_all.append(rows)
            outs.append(y)
            self.evaluations += int(rows.size)
        if not outs:
            return Tensor(np.zeros((n_tok, d), dtype=x.dtype))
        return ag.index_add((n_tok, d), np.concatenate(rows_all), ag.concat(outs, axis=0))


class DenseFFN(Module):
    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float64, expansion: int = 4):
        self.up = Linear(d, expansion * d, rng, dtype)
        self.down = Linear(expansion * d, d, rng, dtype)

    def __call__(self, x: Tensor, selection=None) -> Tensor:
        return self.down(ag.gelu(self.up(x)))


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float64):
        self.q = Linear(d, d, rng, dtype)
        # a key bias shifts every logit of a query row equally, so softmax ignores it
        self.k = Linear(d, d, rng, dtype, bias=False)
        self.v = Linear(d, d, rng, dtype)
        self.o = Linear(d, d, rng, dtype)
        self.heads = heads

    def _split(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        return ag.transpose(ag.reshape(x, (b, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, pad_mask: np.ndarray) -> Tensor:
        b, n, d = x.shape
        dh = d // self.heads
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        bias = np.where(pad_mask, -1e9, 0.0).astype(x.dtype)[:, None, None, :]
        attn = ag.softmax(scores + bias, axis=-1)
        ctx = ag.reshape(ag.transpose(ag.matmul(attn, v), (0, 2, 1, 3)), (b, n, d))
        return self.o(ctx)


class EncoderLayer(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        d = cfg.hidden
        self.attn = MultiHeadAttention(d, cfg.heads, rng, dtype)
        self.norm1 = LayerNorm(d, dtype)
        self.ffn = MoE(d, cfg.moe, rng, dtype) if cfg.moe is not None else DenseFFN(d, rng, dtype)
        self.norm2 = LayerNorm(d, dtype)
        self.dropout = cfg.hidden_dropout

    def __call__(self, x: Tensor, pad_mask: np.ndarray, training: bool = False, rng=None,
                 selection: np.ndarray | None = None) -> Tensor:
        b, n, d = x.shape
        h = self.norm1(x + ag.dropout(self.attn(x, pad_mask), self.dropout, training, rng))
        # the feed-forward only sees real tokens; padded rows get a zero update
        rows = np.flatnonzero(~pad_mask.reshape(-1))
        flat = ag.reshape(h, (b * n, d))
        y = self.ffn(ag.take(flat, rows), selection)
        y = ag.reshape(ag.index_add((b * n, d), rows, y), (b, n, d))
        return self.norm2(h + ag.dropout(y, self.dropout, training, rng))


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.layers = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.layers)]
        self.cfg = cfg

    def __call__(self, x: Tensor, pad_mask: np.ndarray, training: bool = False, rng=None,
                 selections: list | None = None) -> Tensor:
        """``x`` is (B, L, d); ``pad_mask`` is boolean (B, L), true at padding."""
        pad_mask = np.asarray(pad_mask, dtype=bool)
        if pad_mask.shape != x.shape[:2]:
            raise ag.ShapeError(f"pad mask shape {pad_mask.shape} != sequence shape {x.shape[:2]}")
        x = ag.dropout(x, self.cfg.input_dropout, training, rng)
        for i, layer in enumerate(self.layers):
            x = layer(x, pad_mask, training, rng, None if selections is None else selections[i])
        return x

    def moe_layers(self) -> list[MoE]:
        return [l.ffn for l in self.layers if isinstance(l.ffn, MoE)]

    def expert_evaluations(self) -> int:
        return sum(m.evaluations for m in self.moe_layers())

    def reset_counters(self) -> None:
        for m in self.moe_layers():
            m.evaluations = 0


def encoder_forward(encoder: Encoder, tokens: Tensor, pad_mask: np.ndarray, **kw) -> Tensor:
    return encoder(tokens, pad_mask, **kw)


# ------------------------------------------------------------------ analytic counters
# FLOPs count one multiply-add as two operations; biases, norms and softmax are ignored.


def ffn_flops_per_token(d: int, moe: MoEConfig | None) -> int:
    if moe is None:
        return 2 * (d * 4 * d + 4 * d * d)
    return 2 * (moe.top_k * (d * d + d * d) + d * moe.experts)


def count_flops(cfg: EncoderConfig, seq_len: int) -> dict[str, int]:
    d, layers = cfg.hidden, cfg.layers
    moe = cfg.moe if cfg.moe is not None else MoEConfig()
    dense = layers * seq_len * ffn_flops_per_token(d, None)
    sparse = layers * seq_len * ffn_flops_per_token(d, moe)
    attention = layers * seq_len * (2 * 4 * d * d + 2 * 2 * seq_len * d)
    return {
        "dense_ffn": dense,
        "moe_ffn": sparse,
        "attention": attention,
        "dense_total": dense + attention,
        "moe_total": sparse + attention,
        "moe_to_dense_ffn_ratio": sparse / dense,
    }


def _attention_params(d: int) -> int:
    return 4 * d * d + 3 * d  # no key bias


def _ffn_params(d: int, moe: MoEConfig | None) -> tuple[int, int]:
    """(total, active per token) for one feed-forward sublayer."""
    if moe is None:
        n = d * 4 * d + 4 * d + 4 * d * d + d
        return n, n
    expert = 2 * (d * d + d)
    gate = d * moe.experts
    return gate + moe.experts * expert, gate + moe.top_k * expert


def count_params(cfg: EncoderConfig) -> dict[str, int]:
    d = cfg.hidden
    ffn_total, ffn_active = _ffn_params(d, cfg.moe)
    shared = _attention_params(d) + 2 * 2 * d
    return {
        "total": cfg.layers * (shared + ffn_total),
        "active_per_token": cfg.layers * (shared + ffn_active),
    }
