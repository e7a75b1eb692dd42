"""Entity-relation composition functions for qualifier pseudo-triples.

Complex-valued kinds use an interleaved layout: slots ``(2i, 2i+1)`` hold
the real and imaginary part of component ``i``.
"""
from __future__ import annotations

import enum
import math

from . import autograd as ag
from .autograd import Tensor


class CompositionKind(str, enum.Enum):
    TRANSE = "transe"
    DISTMULT = "distmult"
    COMPLEX = "complex"
    ROTATE = "rotate"

    @classmethod
    def parse(cls, value: "str | CompositionKind") -> "CompositionKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown composition {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None

    @property
    def is_complex(self) -> bool:
        return self in (CompositionKind.COMPLEX, CompositionKind.ROTATE)


# phases read from the relation vector are multiplied by this factor
PHASE_SCALE = math.pi


def _pairs(x: Tensor) -> tuple[Tensor, Tensor]:
    return x[..., 0::2], x[..., 1::2]


def _interleave(re: Tensor, im: Tensor) -> Tensor:
    out = ag.stack([re, im], axis=-1)
    return out.reshape(re.shape[:-1] + (2 * re.shape[-1],))


def compose(kind, q_r: Tensor, q_e: Tensor) -> Tensor:
    """Compose qualifier relation ``q_r`` with qualifier entity ``q_e`` (last axis is d)."""
    kind = CompositionKind.parse(kind)
    if q_r.shape[-1] != q_e.shape[-1]:
        raise ag.ShapeError(f"compose: dimension mismatch {q_r.shape} vs {q_e.shape}")
    d = q_r.shape[-1]
    if kind.is_complex and d % 2:
        raise ValueError(f"{kind.value} needs an even embedding dimension, got {d}")

    if kind is CompositionKind.TRANSE:
        return q_e + q_r
    if kind is CompositionKind.DISTMULT:
        return q_e * q_r
    e_re, e_im = _pairs(q_e)
    if kind is CompositionKind.COMPLEX:
        r_re, r_im = _pairs(q_r)
        return _interleave(r_re * e_re - r_im * e_im, r_re * e_im + r_im * e_re)
    phase = q_r[..., 0::2] * PHASE_SCALE
    c, s = ag.cos(phase), ag.sin(phase)
    return _interleave(e_re * c - e_im * s, e_re * s + e_im * c)
