import math

import numpy as np
import pytest

from conftest import central_diff, rel_err
from guided_lstm.recurrent import BNLSTMCell, CellState, LSTMCell, RecurrentStack, zero_state
from guided_lstm.tensor_math import DimensionError


def zero_params(cell):
    for v in cell.params.values():
        v[:] = 0.0


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


class TestLSTMCell:
    def test_zero_everything(self, rng):
        cell = LSTMCell(3, 4, rng)
        zero_params(cell)
        st, _ = cell.step(np.zeros((2, 3)), zero_state(2, 4))
        assert not st.h.any() and not st.c.any()

    def test_zero_params_decay_memory(self, rng):
        cell = LSTMCell(3, 4, rng)
        zero_params(cell)
        v = rng.standard_normal((2, 4))
        st, _ = cell.step(rng.standard_normal((2, 3)), CellState(np.zeros((2, 4)), v))
        np.testing.assert_allclose(st.c, 0.5 * v, atol=1e-15)
        np.testing.assert_allclose(st.h, 0.5 * np.tanh(0.5 * v), atol=1e-15)

    def test_memory_preservation_limit(self, rng):
        cell = LSTMCell(3, 4, rng)
        b = cell.params["lstm/b"]
        b[:4] = -30.0   # input gate closed
        b[8:12] = 30.0  # forget gate open
        prev = CellState(np.zeros((2, 4)), rng.uniform(-1, 1, (2, 4)))
        st, _ = cell.step(0.1 * rng.standard_normal((2, 3)), prev)
        np.testing.assert_allclose(st.c, prev.c, atol=1e-9)

    def test_straight_line(self, rng):
        cell = LSTMCell(2, 3, rng)
        p = cell.params
        x = rng.standard_normal((1, 2))
        prev = CellState(rng.uniform(-1, 1, (1, 3)), rng.standard_normal((1, 3)))
        st, _ = cell.step(x, prev)
        for j in range(3):
            def pre(gate):
                col = gate * 3 + j
                return (sum(x[0, k] * p["lstm/W"][k, col] for k in range(2))
                        + sum(prev.h[0, k] * p["lstm/U"][k, col] for k in range(3))
                        + p["lstm/b"][col])
            i, o, f, g = sig(pre(0)), sig(pre(1)), sig(pre(2)), math.tanh(pre(3))
            c = f * prev.c[0, j] + i * g
            assert st.c[0, j] == pytest.approx(c, abs=1e-12)
            assert st.h[0, j] == pytest.approx(o * math.tanh(c), abs=1e-12)

    def test_orthogonal_init(self, rng):
        cell = LSTMCell(6, 4, rng)
        for key in ("lstm/W", "lstm/U"):
            for k in range(4):
                m = cell.params[key][:, 4 * k:4 * (k + 1)]
                assert np.abs(m.T @ m - np.eye(4)).max() < 1e-8
        np.testing.assert_array_equal(cell.params["lstm/b"][8:12], 1.0)

    def test_shape_errors(self, rng):
        cell = LSTMCell(3, 4, rng)
        with pytest.raises(DimensionError):
            cell.step(np.zeros((2, 5)), zero_state(2, 4))
        with pytest.raises(DimensionError):
            cell.step(np.zeros((2, 3)), zero_state(3, 4))

    def test_h_bounded(self, rng):
        cell = LSTMCell(3, 4, rng)
        st = zero_state(5, 4)
        for _ in range(10):
            st, _ = cell.step(50 * rng.standard_normal((5, 3)), st)
            assert np.all(np.abs(st.h) < 1)


class TestBNLSTMCell:
    def test_zero_gamma_annihilates(self, rng):
        cell = BNLSTMCell(3, 4, rng, t_cap=2)
        zero_params(cell)
        prev = CellState(rng.uniform(-1, 1, (3, 4)), rng.standard_normal((3, 4)))
        st, _ = cell.step(rng.standard_normal((3, 3)), prev, t=1, train=True)
        np.testing.assert_allclose(st.c, 0.5 * prev.c, atol=1e-15)
        assert not st.h.any()

    def test_hand_set_statistics(self, rng):
        cell = BNLSTMCell(1, 1, rng, t_cap=3, eps=1e-5)
        p = cell.params
        p["bnlstm/W"][:] = [[0.3, -0.2, 0.7, 1.1]]
        p["bnlstm/U"][:] = [[0.5, 0.4, -0.6, 0.9]]
        p["bnlstm/b"][:] = [0.1, 0.2, 1.0, -0.3]
        p["bnlstm/gamma_x"][:] = [0.9, 1.2, 0.4, 0.8]
        p["bnlstm/gamma_h"][:] = [0.2, 0.3, 0.5, 0.6]
        p["bnlstm/gamma_c"][:] = 1.5
        p["bnlstm/beta_c"][:] = -0.25
        k = 1  # t = 2
        mx, vx = np.array([0.1, 0.0, -0.2, 0.3]), np.array([1.5, 0.5, 2.0, 0.7])
        mh, vh = np.array([0.0, 0.2, 0.1, -0.1]), np.array([0.3, 0.9, 1.1, 0.4])
        mc, vc = 0.05, 0.8
        cell.bn_x[k].pop_mean[:], cell.bn_x[k].pop_var[:] = mx, vx
        cell.bn_h[k].pop_mean[:], cell.bn_h[k].pop_var[:] = mh, vh
        cell.bn_c[k].pop_mean[:], cell.bn_c[k].pop_var[:] = mc, vc
        x, h0, c0 = 0.8, -0.4, 0.6
        st, _ = cell.step(np.array([[x]]), CellState(np.array([[h0]]), np.array([[c0]])),
                          t=2, train=False)
        gx, gh = p["bnlstm/gamma_x"], p["bnlstm/gamma_h"]
        z = []
        for j in range(4):
            ax = gx[j] * (x * p["bnlstm/W"][0, j] - mx[j]) / math.sqrt(vx[j] + 1e-5)
            ah = gh[j] * (h0 * p["bnlstm/U"][0, j] - mh[j]) / math.sqrt(vh[j] + 1e-5)
            z.append(ax + ah + p["bnlstm/b"][j])
        i, o, f, g = sig(z[0]), sig(z[1]), sig(z[2]), math.tanh(z[3])
        c = f * c0 + i * g
        cn = 1.5 * (c - mc) / math.sqrt(vc + 1e-5) - 0.25
        assert st.c[0, 0] == pytest.approx(c, abs=1e-12)
        assert st.h[0, 0] == pytest.approx(o * math.tanh(cn), abs=1e-12)

    def test_infer_pure(self, rng):
        cell = BNLSTMCell(3, 4, rng, t_cap=2)
        before = {k: (s.pop_mean.copy(), s.pop_var.copy()) for k, s in cell.bn_states().items()}
        x, prev = rng.standard_normal((1, 3)), zero_state(1, 4)
        a, _ = cell.step(x, prev, t=5, train=False)
        b, _ = cell.step(x, prev, t=5, train=False)
        np.testing.assert_array_equal(a.h, b.h)
        for k, s in cell.bn_states().items():
            np.testing.assert_array_equal(s.pop_mean, before[k][0])
            np.testing.assert_array_equal(s.pop_var, before[k][1])

    def test_statistics_capped_per_timestep(self, rng):
        cell = BNLSTMCell(3, 4, rng, t_cap=2)
        st = zero_state(4, 4)
        for t in (1, 2, 3, 4):
            st, _ = cell.step(rng.standard_normal((4, 3)), st, t=t, train=True)
        # slot 0 saw one update, slot 1 (the cap) saw three
        m0 = np.abs(cell.bn_x[0].pop_mean).sum()
        assert m0 > 0 and np.abs(cell.bn_x[1].pop_mean).sum() > 0
        assert cell.bn_x[0].gamma is cell.bn_x[1].gamma

    def test_bad_timestep(self, rng):
        with pytest.raises(ValueError):
            BNLSTMCell(3, 4, rng).step(np.zeros((2, 3)), zero_state(2, 4), t=0)


class TestStack:
    def test_single_step_reduction(self, rng):
        stack = RecurrentStack(3, 4, depth=1, rng=rng)
        x = rng.standard_normal((1, 2, 3))
        hs, states, _ = stack.run_sequence(x)
        st, _ = stack.cells[0].step(x[0], zero_state(2, 4))
        np.testing.assert_array_equal(hs[0], st.h)
        np.testing.assert_array_equal(states[0].c, st.c)

    @pytest.mark.parametrize("depth", [1, 2])
    def test_shapes(self, rng, depth):
        stack = RecurrentStack(5, 256, depth=depth, rng=rng)
        hs, states, _ = stack.run_sequence(rng.standard_normal((3, 2, 5)))
        assert hs.shape == (3, 2, 256) and len(states) == depth

    def test_empty(self, rng):
        with pytest.raises(DimensionError):
            RecurrentStack(3, 4, rng=rng).run_sequence(np.zeros((0, 2, 3)))

    @pytest.mark.parametrize("kind", ["lstm", "bnlstm"])
    @pytest.mark.parametrize("seed", range(20))
    def test_bptt_gradcheck(self, kind, seed):
        r = np.random.default_rng(seed)
        extra = dict(t_cap=2) if kind == "bnlstm" else {}
        stack = RecurrentStack(3, 4, depth=2, kind=kind, rng=r, **extra)
        for v in stack.params.values():
            v += 0.3 * r.standard_normal(v.shape)
        # with two samples a batch norm maps each column to +-1 whatever W is
        batch = 4 if kind == "bnlstm" else 2
        inputs = r.standard_normal((3, batch, 3))
        probe = r.standard_normal((3, batch, 4))

        def f():
            hs, _, _ = stack.run_sequence(inputs, train=True)
            return float((hs * probe).sum())

        snap = {k: (s.pop_mean.copy(), s.pop_var.copy()) for k, s in stack.bn_states().items()}

        def restore():
            for k, s in stack.bn_states().items():
                s.pop_mean[:], s.pop_var[:] = snap[k]

        grads = {k: np.zeros_like(v) for k, v in stack.params.items()}
        _, _, caches = stack.run_sequence(inputs)
        dx = stack.run_sequence_backward(probe, caches, grads)
        restore()
        for k, v in stack.params.items():
            num = central_diff(lambda: (f(), restore())[0], v)
            assert rel_err(grads[k], num) < 1e-5, k
        num = central_diff(lambda: (f(), restore())[0], inputs)
        assert rel_err(dx, num) < 1e-5
