import numpy as np
import pytest

from conftest import central_diff, rel_err
from guided_lstm.classifiers import LogisticHead, MoeHead, logistic_predict, moe_predict
from guided_lstm.tensor_math import DimensionError


class TestLogistic:
    def test_zero_params(self, rng):
        assert np.all(LogisticHead(4, 3).predict(rng.standard_normal((2, 4))) == 0.5)

    def test_saturates(self):
        s = logistic_predict(np.array([[1.0]]), np.array([[1e4]]), np.zeros(1))
        assert s[0, 0] == pytest.approx(1.0)

    def test_dimension(self):
        with pytest.raises(DimensionError):
            LogisticHead(4, 3).predict(np.zeros((2, 5)))

    def test_gradients(self, rng):
        head = LogisticHead(4, 3)
        for v in head.params.values():
            v += rng.standard_normal(v.shape)
        f = rng.standard_normal((5, 4))
        y = (rng.random((5, 3)) < 0.4).astype(float)
        grads = {k: np.zeros_like(v) for k, v in head.params.items()}
        _, cache = head.loss(f, y)
        df = head.backward(cache, grads)
        obj = lambda: head.loss(f, y)[0]
        for k, v in head.params.items():
            assert rel_err(grads[k], central_diff(obj, v)) < 1e-6
        assert rel_err(df, central_diff(obj, f)) < 1e-6


class TestMoe:
    def test_zero_params(self, rng):
        head = MoeHead(4, 3, n_experts=2, init_scale=0.0)
        np.testing.assert_allclose(head.predict(rng.standard_normal((2, 4))), 1 / 3, atol=1e-15)

    def test_single_expert_reduces_to_logistic(self, rng):
        d, c = 4, 3
        w, b = rng.standard_normal((d, c)), rng.standard_normal(c)
        gate_b = np.tile([60.0, -60.0], c)
        f = rng.standard_normal((5, d))
        s = moe_predict(f, np.zeros((d, 2 * c)), gate_b, w, b, 1)
        np.testing.assert_allclose(s, logistic_predict(f, w, b), atol=1e-12)

    def test_convex_bound(self, rng):
        head = MoeHead(4, 3, n_experts=3, rng=rng, init_scale=3.0)
        f = rng.standard_normal((20, 4))
        scores, _, experts = head._forward(f)
        assert np.all(scores >= 0) and np.all(scores <= experts.max(axis=2) + 1e-15)

    def test_gates_sum_to_one(self, rng):
        _, gates, _ = MoeHead(4, 3, rng=rng, init_scale=2.0)._forward(rng.standard_normal((3, 4)))
        np.testing.assert_allclose(gates.sum(axis=2), 1.0)

    def test_needs_an_expert(self):
        with pytest.raises(ValueError):
            MoeHead(4, 3, n_experts=0)

    def test_experts_start_apart(self):
        w = MoeHead(4, 3).params["moe/expert_W"]
        assert not np.allclose(w[:, 0::2], w[:, 1::2])

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients(self, seed):
        r = np.random.default_rng(seed)
        head = MoeHead(4, 3, n_experts=2, rng=r, init_scale=1.0)
        f = r.standard_normal((5, 4))
        y = (r.random((5, 3)) < 0.4).astype(float)
        grads = {k: np.zeros_like(v) for k, v in head.params.items()}
        _, cache = head.loss(f, y)
        df = head.backward(cache, grads)
        obj = lambda: head.loss(f, y)[0]
        for k, v in head.params.items():
            assert rel_err(grads[k], central_diff(obj, v)) < 1e-5, k
        assert rel_err(df, central_diff(obj, f)) < 1e-5


def test_moe_output_is_probability(rng):
    f = rng.standard_normal((10, 4))
    s = MoeHead(4, 6, n_experts=4, rng=rng, init_scale=5.0).predict(f)
    assert np.all((s >= 0) & (s <= 1))
