"""Video-level classifier heads: per-class logistic regression and a
mixture of logistic experts with a null expert in the gate."""

import numpy as np

from .layers import loss_binary_ce
from .tensor_math import DTYPE, DimensionError, sigmoid, softmax

_EPS = 1e-12


def _check(f, weight):
    if f.ndim != 2 or f.shape[1] != weight.shape[0]:
        raise DimensionError(f"features {f.shape} do not match weight {weight.shape}")


class LogisticHead:
    def __init__(self, d, n_classes, name="logistic"):
        self.d, self.n_classes, self.name = d, n_classes, name
        self.params = {f"{name}/W": np.zeros((d, n_classes), dtype=DTYPE),
                       f"{name}/b": np.zeros(n_classes, dtype=DTYPE)}

    def logits(self, f):
        w = self.params[f"{self.name}/W"]
        _check(f, w)
        return f @ w + self.params[f"{self.name}/b"]

    def predict(self, f):
        return sigmoid(self.logits(f))

    def loss(self, f, targets):
        """Mean binary cross entropy over B x C in logit form.

        Returns ``(loss, cache)``; pass the cache to :meth:`backward`.
        """
        loss, dlogits = loss_binary_ce(self.logits(f), targets)
        return loss, (f, dlogits)

    def backward(self, cache, grads, scale=1.0):
        f, dlogits = cache
        dlogits = dlogits * scale
        grads[f"{self.name}/W"] += f.T @ dlogits
        grads[f"{self.name}/b"] += dlogits.sum(axis=0)
        return dlogits @ self.params[f"{self.name}/W"].T


class MoeHead:
    """``score_c = sum_e softmax(gate_c)_e * sigmoid(expert_{c,e})``.

    The gate softmax runs over ``E + 1`` entries; the extra one is a null
    expert whose prediction is always 0.
    """

    def __init__(self, d, n_classes, n_experts=2, name="moe", rng=None, init_scale=0.01):
        if n_experts < 1:
            raise ValueError("need at least one expert")
        self.d, self.n_classes, self.E, self.name = d, n_classes, n_experts, name
        rng = np.random.default_rng(0) if rng is None else rng
        # experts must start apart or they stay identical under gradient descent
        self.params = {
            f"{name}/gate_W": init_scale * rng.standard_normal((d, n_classes * (n_experts + 1))),
            f"{name}/gate_b": np.zeros(n_classes * (n_experts + 1), dtype=DTYPE),
            f"{name}/expert_W": init_scale * rng.standard_normal((d, n_classes * n_experts)),
            f"{name}/expert_b": np.zeros(n_classes * n_experts, dtype=DTYPE),
        }

    def _forward(self, f):
        p, n = self.params, self.name
        _check(f, p[f"{n}/gate_W"])
        b, c, e = f.shape[0], self.n_classes, self.E
        gates = softmax((f @ p[f"{n}/gate_W"] + p[f"{n}/gate_b"]).reshape(b, c, e + 1))
        experts = sigmoid((f @ p[f"{n}/expert_W"] + p[f"{n}/expert_b"]).reshape(b, c, e))
        scores = (gates[:, :, :e] * experts).sum(axis=2)
        return scores, gates, experts

    def predict(self, f):
        return self._forward(f)[0]

    def loss(self, f, targets):
        scores, gates, experts = self._forward(f)
        y = np.asarray(targets, dtype=DTYPE)
        if y.shape != scores.shape:
            raise DimensionError(f"targets {y.shape} do not match scores {scores.shape}")
        p = np.clip(scores, _EPS, 1.0 - _EPS)
        n = y.size
        loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / n
        dscores = (p - y) / (p * (1.0 - p)) / n
        return float(loss), (f, dscores, scores, gates, experts)

    def backward(self, cache, grads, scale=1.0):
        f, dscores, scores, gates, experts = cache
        p, n = self.params, self.name
        b, c, e = f.shape[0], self.n_classes, self.E
        ds = dscores[:, :, None] * scale
        padded = np.concatenate([experts, np.zeros((b, c, 1))], axis=2)
        dgate = (ds * gates * (padded - scores[:, :, None])).reshape(b, c * (e + 1))
        dexpert = (ds * gates[:, :, :e] * experts * (1.0 - experts)).reshape(b, c * e)
        grads[f"{n}/gate_W"] += f.T @ dgate
        grads[f"{n}/gate_b"] += dgate.sum(axis=0)
        grads[f"{n}/expert_W"] += f.T @ dexpert
        grads[f"{n}/expert_b"] += dexpert.sum(axis=0)
        return dgate @ p[f"{n}/gate_W"].T + dexpert @ p[f"{n}/expert_W"].T


def logistic_predict(f, weight, bias):
    _check(f, weight)
    return sigmoid(f @ weight + bias)


def moe_predict(f, gate_weight, gate_bias, expert_weight, expert_bias, n_experts):
    head = MoeHead(f.shape[1], expert_weight.shape[1] // n_experts, n_experts)
    head.params.update({"moe/gate_W": gate_weight, "moe/gate_b": gate_bias,
                        "moe/expert_W": expert_weight, "moe/expert_b": expert_bias})
    return head.predict(f)
