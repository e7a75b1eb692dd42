import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperformer import autograd as ag
from hyperformer.autograd import Tensor, grad_check
from hyperformer.cbi import CBI, CbiConfig, Gate, PairInteraction, checkered, count_cbi_params, grid_shape

from oracles import direct_conv

CFG = CbiConfig(channels=2, kernel=3, input_dropout=0.0, hidden_dropout=0.0)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def pair_oracle(pi, x, y):
    rows, cols = pi.rows, pi.cols
    b, d = x.shape
    grid = np.zeros((b, 1, 2 * rows, cols))
    for n in range(b):
        for i in range(rows):
            for j in range(cols):
                grid[n, 0, 2 * i, j] = x[n, i * cols + j]
                grid[n, 0, 2 * i + 1, j] = y[n, i * cols + j]
    feats = direct_conv(grid, pi.kernel.data, pi.conv_bias.data).reshape(b, -1)
    out = feats @ pi.pint.weight.data + pi.pint.bias.data
    return out[:, :d], out[:, d:]


def gate_oracle(g, a, b):
    alpha = sigmoid(a @ g.w1.data + b @ g.w2.data + g.b1.data + g.b2.data)
    return alpha * a + (1 - alpha) * b


def test_grid_shape():
    assert grid_shape(8) == (2, 4)
    assert grid_shape(400) == (20, 20)
    assert grid_shape(7) == (1, 7)
    assert grid_shape(12, rows=3) == (3, 4)
    with pytest.raises(ValueError):
        grid_shape(10, rows=3)


def test_checkered_alternates_rows():
    x = Tensor(np.arange(4.0).reshape(1, 4))
    y = Tensor(-np.arange(4.0).reshape(1, 4) - 1)
    grid = checkered(x, y, 2, 2).data[0, 0]
    np.testing.assert_array_equal(grid, [[0, 1], [-1, -2], [2, 3], [-3, -4]])


def test_pair_interaction_matches_oracle():
    rng = np.random.default_rng(0)
    pi = PairInteraction(4, CFG, rng)
    pi.conv_bias.data[:] = rng.standard_normal(2)
    pi.pint.bias.data[:] = rng.standard_normal(8)
    x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    got = pi(Tensor(x), Tensor(y))
    want = pair_oracle(pi, x, y)
    np.testing.assert_allclose(got[0].data, want[0], atol=1e-12)
    np.testing.assert_allclose(got[1].data, want[1], atol=1e-12)
    assert pi.conv_interact(Tensor(x), Tensor(y)).shape == (3, 2 * 2 * 4)


def test_zero_inputs_give_zero_features():
    pi = PairInteraction(4, CFG, np.random.default_rng(1))
    z = Tensor(np.zeros((2, 4)))
    assert not pi.conv_interact(z, z).data.any()


def test_gate_cases():
    rng = np.random.default_rng(2)
    g = Gate(4, rng)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    np.testing.assert_allclose(g(Tensor(a), Tensor(b)).data, gate_oracle(g, a, b), atol=1e-12)
    np.testing.assert_allclose(g(Tensor(a), Tensor(a)).data, a, atol=1e-12)
    for p in g.parameters():
        p.data[:] = 0
    np.testing.assert_allclose(g(Tensor(a), Tensor(b)).data, (a + b) / 2, atol=1e-12)


def test_cbi_end_to_end_matches_scripted_forward():
    rng = np.random.default_rng(3)
    cbi = CBI(4, CFG, rng)
    for p in cbi.parameters():
        p.data[:] = rng.standard_normal(p.shape) * 0.5
    rel, nei, qual = (rng.standard_normal((2, 4)) for _ in range(3))
    r_n, n_r = pair_oracle(cbi.rel_nei, rel, nei)
    r_q, q_r = pair_oracle(cbi.rel_qual, rel, qual)
    n_q, q_n = pair_oracle(cbi.nei_qual, nei, qual)
    m_h = gate_oracle(cbi.gate_nei, n_r, n_q)
    m_r = gate_oracle(cbi.gate_rel, r_n, r_q) + gate_oracle(cbi.gate_qual, q_r, q_n)
    got_h, got_r = cbi(Tensor(rel), Tensor(nei), Tensor(qual))
    np.testing.assert_allclose(got_h.data, m_h, atol=1e-12)
    np.testing.assert_allclose(got_r.data, m_r, atol=1e-12)


def test_cbi_zero_parameters_give_zero_outputs():
    cbi = CBI(4, CFG, np.random.default_rng(4))
    for p in cbi.parameters():
        p.data[:] = 0
    x = Tensor(np.random.default_rng(5).standard_normal((2, 4)))
    m_h, m_r = cbi(x, x, x)
    assert m_h.shape == m_r.shape == (2, 4)
    assert not m_h.data.any() and not m_r.data.any()


def test_cbi_gradients_at_d8():
    rng = np.random.default_rng(6)
    cbi = CBI(8, CFG, rng)
    ins = [Tensor(rng.standard_normal((2, 8))) for _ in range(3)]
    w1, w2 = Tensor(rng.standard_normal((2, 8))), Tensor(rng.standard_normal((2, 8)))

    def fn():
        m_h, m_r = cbi(*ins)
        return ag.sum_(m_h * w1) + ag.sum_(m_r * w2)

    assert grad_check(fn, ins + cbi.parameters()) <= 1e-3


def test_param_count_and_shape_errors():
    cfg = CbiConfig(channels=3, kernel=5)
    cbi = CBI(12, cfg, np.random.default_rng(7))
    assert count_cbi_params(12, cfg) == cbi.num_parameters()
    with pytest.raises(ag.ShapeError):
        cbi(Tensor(np.ones((2, 12))), Tensor(np.ones((2, 12))), Tensor(np.ones((3, 12))))
    with pytest.raises(ValueError):
        PairInteraction(10, CbiConfig(channels=1, kernel=3, grid_rows=3), np.random.default_rng(8))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**16))
def test_gate_output_lies_between_inputs(seed):
    rng = np.random.default_rng(seed)
    g = Gate(4, rng)
    a, b = rng.standard_normal((5, 4)) * 3, rng.standard_normal((5, 4)) * 3
    alpha = g.alpha(Tensor(a), Tensor(b)).data
    assert np.all((alpha > 0) & (alpha < 1))
    out = g(Tensor(a), Tensor(b)).data
    assert np.all(out >= np.minimum(a, b) - 1e-12) and np.all(out <= np.maximum(a, b) + 1e-12)


def test_zeroed_neighbor_and_qualifier_inputs_leave_only_relation_dependence():
    rng = np.random.default_rng(9)
    cbi = CBI(4, CFG, rng)
    rel = rng.standard_normal((1, 4))
    z = Tensor(np.zeros((1, 4)))
    first = cbi(Tensor(rel), z, z)
    second = cbi(Tensor(np.vstack([rel, rng.standard_normal((1, 4))])), Tensor(np.zeros((2, 4))),
                 Tensor(np.zeros((2, 4))))
    np.testing.assert_allclose(second[0].data[:1], first[0].data, atol=1e-12)
    np.testing.assert_allclose(second[1].data[:1], first[1].data, atol=1e-12)
