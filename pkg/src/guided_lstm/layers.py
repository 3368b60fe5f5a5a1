"""Differentiable building blocks: embedding lookup, affine word projection,
batch normalization and the two cross-entropy losses.

Every forward function returns its output together with whatever the matching
backward function needs; backward functions return input gradients and write
parameter gradients into caller-supplied arrays.
"""

from dataclasses import dataclass

import numpy as np

from .tensor_math import DTYPE, DimensionError, log_softmax, sigmoid, softmax


class VocabularyError(IndexError):
    """A word id falls outside the vocabulary."""


class BatchSizeError(ValueError):
    """Batch statistics need at least two samples."""


class TargetError(ValueError):
    """Loss targets are malformed."""


# -- embedding ---------------------------------------------------------------


def embed(ids, table):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise VocabularyError(f"ids must lie in [0, {table.shape[0]})")
    return table[ids]


def embed_backward(ids, dout, dtable):
    """Scatter-add ``dout`` rows into the touched rows of ``dtable``."""
    np.add.at(dtable, np.asarray(ids, dtype=np.int64), dout)


# -- word projection ---------------------------------------------------------


def word_projection(h, weight, bias):
    if h.ndim != 2 or h.shape[1] != weight.shape[0]:
        raise DimensionError(f"projection input {h.shape} does not match weight {weight.shape}")
    return h @ weight + bias


def word_projection_backward(h, dlogits, weight, dweight, dbias):
    dweight += h.T @ dlogits
    dbias += dlogits.sum(axis=0)
    return dlogits @ weight.T


# -- batch normalization -----------------------------------------------------


@dataclass
class BatchNormState:
    """Scale/shift parameters plus exponentially decayed population statistics.

    ``gamma`` and ``beta`` may be shared between several states (per-timestep
    statistics with one set of learnable parameters).
    """

    gamma: np.ndarray
    beta: np.ndarray
    pop_mean: np.ndarray
    pop_var: np.ndarray
    decay: float = 0.999
    eps: float = 1e-5

    @classmethod
    def create(cls, dim, gamma_init=0.1, decay=0.999, eps=1e-5, gamma=None, beta=None):
        if gamma is None:
            gamma = np.full(dim, gamma_init, dtype=DTYPE)
        if beta is None:
            beta = np.zeros(dim, dtype=DTYPE)
        return cls(gamma, beta, np.zeros(dim, dtype=DTYPE), np.ones(dim, dtype=DTYPE), decay, eps)


def batch_norm(x, state, train, update_stats=True):
    """Normalize ``x`` (B x d) and return ``(y, cache)``.

    In train mode the batch mean and biased batch variance are used and the
    population statistics move towards them (unless ``update_stats`` is off).
    Infer mode reads the population statistics only.
    """
    if train:
        if x.shape[0] < 2:
            raise BatchSizeError("train-mode batch norm needs a batch of at least 2")
        scale = 1.0 / x.shape[0]
        mu = x.sum(axis=0) * scale
        centered = x - mu
        var = (centered * centered).sum(axis=0) * scale
        if update_stats:
            d = state.decay
            state.pop_mean[...] = d * state.pop_mean + (1.0 - d) * mu
            state.pop_var[...] = d * state.pop_var + (1.0 - d) * var
    else:
        mu, var = state.pop_mean, state.pop_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (centered if train else x - mu) * inv_std
    y = state.gamma * xhat + state.beta
    return y, (xhat, inv_std, train)


def batch_norm_backward(dy, cache, state, dgamma=None, dbeta=None):
    xhat, inv_std, train = cache
    if dgamma is not None:
        dgamma += (dy * xhat).sum(axis=0)
    if dbeta is not None:
        dbeta += dy.sum(axis=0)
    dxhat = dy * state.gamma
    if not train:
        return dxhat * inv_std
    n = dy.shape[0]
    return inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


# -- losses ------------------------------------------------------------------


def _row_weights(weights, n):
    if weights is None:
        return np.ones(n, dtype=DTYPE)
    w = np.asarray(weights, dtype=DTYPE)
    if w.shape != (n,):
        raise DimensionError(f"weights must have shape ({n},)")
    return w


def loss_softmax_ce(logits, target_ids, weights=None):
    """Softmax cross entropy averaged over the batch.

    ``weights`` masks rows (padding) without changing the 1/B normalizer.
    Returns ``(loss, dlogits)``.
    """
    b, v = logits.shape
    t = np.asarray(target_ids, dtype=np.int64)
    if t.shape != (b,):
        raise DimensionError(f"expected {b} targets, got shape {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= v):
        raise VocabularyError(f"targets must lie in [0, {v})")
    w = _row_weights(weights, b)
    logp = log_softmax(logits)
    rows = np.arange(b)
    loss = -(w * logp[rows, t]).sum() / b
    grad = softmax(logits)
    grad[rows, t] -= 1.0
    grad *= (w / b)[:, None]
    return float(loss), grad


def loss_binary_ce(logits, targets, weights=None):
    """Per-entry sigmoid cross entropy in logit form, averaged over B x V."""
    b, v = logits.shape
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != logits.shape:
        raise DimensionError(f"targets {y.shape} do not match logits {logits.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise TargetError("binary targets must be 0 or 1")
    w = _row_weights(weights, b)[:, None]
    z = logits
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = (w * per).sum() / (b * v)
    grad = w * (sigmoid(z) - y) / (b * v)
    return float(loss), grad


def one_hot(ids, n):
    out = np.zeros((len(ids), n), dtype=DTYPE)
    out[np.arange(len(ids)), np.asarray(ids, dtype=np.int64)] = 1.0
    return out
