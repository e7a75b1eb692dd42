import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperformer.autograd import Tensor, grad_check
from hyperformer import autograd as ag
from hyperformer.composition import PHASE_SCALE, CompositionKind, compose


def as_complex(x):
    return x[..., 0::2] + 1j * x[..., 1::2]


def oracle(kind, r, e):
    if kind == "transe":
        return e + r
    if kind == "distmult":
        return e * r
    if kind == "complex":
        z = as_complex(r) * as_complex(e)
    else:
        z = np.exp(1j * PHASE_SCALE * r[..., 0::2]) * as_complex(e)
    out = np.empty(r.shape)
    out[..., 0::2], out[..., 1::2] = z.real, z.imag
    return out


vectors = st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.just(2 * n), st.integers(0, 2**31 - 1)))


def test_identities():
    v = np.array([[0.3, -1.2, 2.0, 0.5]])
    np.testing.assert_array_equal(compose("transe", Tensor(np.zeros_like(v)), Tensor(v)).data, v)
    np.testing.assert_array_equal(compose("distmult", Tensor(np.ones_like(v)), Tensor(v)).data, v)
    np.testing.assert_array_equal(compose("rotate", Tensor(np.zeros_like(v)), Tensor(v)).data, v)
    # i * 1 = i
    out = compose("complex", Tensor(np.array([0.0, 1.0])), Tensor(np.array([1.0, 0.0]))).data
    np.testing.assert_array_equal(out, [0.0, 1.0])


@pytest.mark.parametrize("kind", [k.value for k in CompositionKind])
def test_matches_complex_arithmetic(kind):
    rng = np.random.default_rng(0)
    r, e = rng.standard_normal((5, 8)), rng.standard_normal((5, 8))
    np.testing.assert_allclose(compose(kind, Tensor(r), Tensor(e)).data, oracle(kind, r, e), atol=1e-12)


@pytest.mark.parametrize("kind", [k.value for k in CompositionKind])
def test_gradients(kind):
    rng = np.random.default_rng(1)
    r, e, w = (Tensor(rng.standard_normal((3, 8))) for _ in range(3))
    assert grad_check(lambda: ag.sum_(compose(kind, r, e) * w), [r, e]) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_rotate_preserves_modulus(args):
    d, seed = args
    rng = np.random.default_rng(seed)
    r, e = rng.standard_normal(d) * 3, rng.standard_normal(d)
    out = compose("rotate", Tensor(r), Tensor(e)).data
    assert np.max(np.abs(np.abs(as_complex(out)) - np.abs(as_complex(e)))) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(vectors, st.sampled_from(["complex", "distmult"]))
def test_argument_commutativity_is_exact(args, kind):
    d, seed = args
    rng = np.random.default_rng(seed)
    a, b = Tensor(rng.standard_normal(d)), Tensor(rng.standard_normal(d))
    np.testing.assert_array_equal(compose(kind, a, b).data, compose(kind, b, a).data)


def test_complex_kinds_need_even_dimension():
    x = Tensor(np.ones(3))
    with pytest.raises(ValueError):
        compose("complex", x, x)
    with pytest.raises(ValueError):
        compose("bogus", x, x)
    assert CompositionKind.parse("RotatE") is CompositionKind.ROTATE
