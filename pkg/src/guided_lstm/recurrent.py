"""LSTM and batch-normalized LSTM cells with backpropagation through time.

Gate pre-activations are stored as one block matrix per cell with column
order ``i, o, f, g``; each ``d_h``-wide block is initialized orthogonal on
its own.
"""

from typing import NamedTuple

import numpy as np

from .layers import BatchNormState, batch_norm, batch_norm_backward
from .tensor_math import DTYPE, DimensionError, orthogonal, sigmoid

GATES = ("i", "o", "f", "g")


class CellState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


def zero_state(batch, d_h):
    return CellState(np.zeros((batch, d_h), dtype=DTYPE), np.zeros((batch, d_h), dtype=DTYPE))


def _gate_blocks(rows, d_h, rng):
    return np.concatenate([orthogonal(rows, d_h, rng) for _ in GATES], axis=1)


def _gates(z, d_h):
    i = sigmoid(z[:, :d_h])
    o = sigmoid(z[:, d_h:2 * d_h])
    f = sigmoid(z[:, 2 * d_h:3 * d_h])
    g = np.tanh(z[:, 3 * d_h:])
    return i, o, f, g


def _gates_backward(dc, do, i, o, f, g, c_prev):
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    return np.concatenate(
        [di * i * (1.0 - i), do * o * (1.0 - o), df * f * (1.0 - f), dg * (1.0 - g * g)], axis=1
    )


class LSTMCell:
    """Plain LSTM cell: ``i,o,f = sigmoid(xW + hU + b)``, ``g = tanh(...)``."""

    kind = "lstm"

    def __init__(self, d_in, d_h, rng, name="lstm", forget_bias=1.0):
        self.d_in, self.d_h, self.name = d_in, d_h, name
        b = np.zeros(4 * d_h, dtype=DTYPE)
        b[2 * d_h:3 * d_h] = forget_bias
        self.params = {
            f"{name}/W": _gate_blocks(d_in, d_h, rng),
            f"{name}/U": _gate_blocks(d_h, d_h, rng),
            f"{name}/b": b,
        }

    def _check(self, x, prev):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise DimensionError(f"{self.name}: input {x.shape} expected (B, {self.d_in})")
        if prev.h.shape != (x.shape[0], self.d_h) or prev.c.shape != prev.h.shape:
            raise DimensionError(f"{self.name}: state shape mismatch")

    def _input_projection(self, x, prev, xw):
        if xw is None:
            self._check(x, prev)
            return x @ self.params[f"{self.name}/W"]
        if xw.shape != (prev.h.shape[0], 4 * self.d_h):
            raise DimensionError(f"{self.name}: projected input {xw.shape} has the wrong shape")
        return xw

    def _input_backward(self, x, dxw, grads):
        """Gradient w.r.t. the raw input, or w.r.t. ``xW`` when the caller
        supplied a precomputed projection (``x is None``)."""
        if x is None:
            return dxw
        grads[f"{self.name}/W"] += x.T @ dxw
        return dxw @ self.params[f"{self.name}/W"].T

    def step(self, x, prev, t=1, train=True, xw=None):
        """One timestep. ``xw`` may carry a precomputed ``x @ W``; then ``x``
        is ignored and :meth:`step_backward` returns the gradient of ``xw``."""
        p, n = self.params, self.name
        z = self._input_projection(x, prev, xw) + prev.h @ p[f"{n}/U"] + p[f"{n}/b"]
        i, o, f, g = _gates(z, self.d_h)
        c = f * prev.c + i * g
        tc = np.tanh(c)
        h = o * tc
        return CellState(h, c), (None if xw is not None else x, prev, i, o, f, g, tc)

    def step_backward(self, dh, dc, cache, grads):
        x, prev, i, o, f, g, tc = cache
        p, n = self.params, self.name
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = _gates_backward(dc, do, i, o, f, g, prev.c)
        grads[f"{n}/U"] += prev.h.T @ dz
        grads[f"{n}/b"] += dz.sum(axis=0)
        return self._input_backward(x, dz, grads), dz @ p[f"{n}/U"].T, dc * f


class BNLSTMCell(LSTMCell):
    """LSTM with batch norm on ``xW``, ``hU`` and the cell before its tanh.

    Population statistics are kept per timestep up to ``t_cap``; later steps
    reuse the last slot. Scale parameters are shared across timesteps. The
    input and recurrent normalizers have no shift (the gate bias plays that
    role); the cell normalizer has a learnable shift.
    """

    kind = "bnlstm"

    def __init__(self, d_in, d_h, rng, name="bnlstm", forget_bias=1.0, t_cap=32,
                 gamma_init=0.1, decay=0.999, eps=1e-5):
        super().__init__(d_in, d_h, rng, name=name, forget_bias=forget_bias)
        self.t_cap = t_cap
        gx = np.full(4 * d_h, gamma_init, dtype=DTYPE)
        gh = np.full(4 * d_h, gamma_init, dtype=DTYPE)
        gc = np.full(d_h, gamma_init, dtype=DTYPE)
        bc = np.zeros(d_h, dtype=DTYPE)
        self.params.update({f"{name}/gamma_x": gx, f"{name}/gamma_h": gh,
                            f"{name}/gamma_c": gc, f"{name}/beta_c": bc})
        zero4 = np.zeros(4 * d_h, dtype=DTYPE)
        mk = BatchNormState.create
        self.bn_x = [mk(4 * d_h, decay=decay, eps=eps, gamma=gx, beta=zero4) for _ in range(t_cap)]
        self.bn_h = [mk(4 * d_h, decay=decay, eps=eps, gamma=gh, beta=zero4) for _ in range(t_cap)]
        self.bn_c = [mk(d_h, decay=decay, eps=eps, gamma=gc, beta=bc) for _ in range(t_cap)]

    def bn_states(self):
        """All population-statistics holders, in a stable order."""
        out = {}
        for label, states in (("x", self.bn_x), ("h", self.bn_h), ("c", self.bn_c)):
            for k, s in enumerate(states):
                out[f"{self.name}/bn_{label}/{k}"] = s
        return out

    def step(self, x, prev, t=1, train=True, xw=None):
        if t < 1:
            raise ValueError("timesteps are 1-based")
        p, n = self.params, self.name
        k = min(t, self.t_cap) - 1
        raw = self._input_projection(x, prev, xw)
        hu = prev.h @ p[f"{n}/U"]
        ax, cache_x = batch_norm(raw, self.bn_x[k], train)
        ah, cache_h = batch_norm(hu, self.bn_h[k], train)
        z = ax + ah + p[f"{n}/b"]
        i, o, f, g = _gates(z, self.d_h)
        c = f * prev.c + i * g
        cn, cache_c = batch_norm(c, self.bn_c[k], train)
        tc = np.tanh(cn)
        h = o * tc
        x = None if xw is not None else x
        return CellState(h, c), (x, prev, i, o, f, g, tc, k, cache_x, cache_h, cache_c)

    def step_backward(self, dh, dc, cache, grads):
        x, prev, i, o, f, g, tc, k, cache_x, cache_h, cache_c = cache
        p, n = self.params, self.name
        do = dh * tc
        dcn = dh * o * (1.0 - tc * tc)
        dc = dc + batch_norm_backward(dcn, cache_c, self.bn_c[k],
                                      grads[f"{n}/gamma_c"], grads[f"{n}/beta_c"])
        dz = _gates_backward(dc, do, i, o, f, g, prev.c)
        grads[f"{n}/b"] += dz.sum(axis=0)
        dxw = batch_norm_backward(dz, cache_x, self.bn_x[k], grads[f"{n}/gamma_x"])
        dhu = batch_norm_backward(dz, cache_h, self.bn_h[k], grads[f"{n}/gamma_h"])
        grads[f"{n}/U"] += prev.h.T @ dhu
        return self._input_backward(x, dxw, grads), dhu @ p[f"{n}/U"].T, dc * f


def make_cell(kind, d_in, d_h, rng, name, **bn_kwargs):
    if kind == "lstm":
        return LSTMCell(d_in, d_h, rng, name=name)
    if kind == "bnlstm":
        return BNLSTMCell(d_in, d_h, rng, name=name, **bn_kwargs)
    raise ValueError(f"unknown cell kind {kind!r}")


class RecurrentStack:
    """``depth`` cells where layer ``l+1`` consumes the hiddens of layer ``l``."""

    def __init__(self, d_in, d_h, depth=2, kind="lstm", rng=None, name="rnn", **bn_kwargs):
        rng = np.random.default_rng(0) if rng is None else rng
        self.d_in, self.d_h, self.depth, self.kind = d_in, d_h, depth, kind
        self.cells = [
            make_cell(kind, d_in if l == 0 else d_h, d_h, rng, f"{name}/{l}", **bn_kwargs)
            for l in range(depth)
        ]

    @property
    def params(self):
        out = {}
        for cell in self.cells:
            out.update(cell.params)
        return out

    def bn_states(self):
        out = {}
        for cell in self.cells:
            if isinstance(cell, BNLSTMCell):
                out.update(cell.bn_states())
        return out

    def initial_state(self, batch):
        return [zero_state(batch, self.d_h) for _ in self.cells]

    def step(self, x, states, t, train, xw=None):
        """Advance every layer one timestep; returns ``(new_states, caches)``.

        ``xw`` optionally replaces ``x @ W`` of the bottom layer, in which case
        :meth:`step_backward` returns the gradient of ``xw`` instead of ``x``.
        """
        new, caches = [], []
        inp = x
        for l, (cell, prev) in enumerate(zip(self.cells, states)):
            st, cache = cell.step(inp, prev, t, train, xw if l == 0 else None)
            new.append(st)
            caches.append(cache)
            inp = st.h
        return new, caches

    def step_backward(self, dh_top, dstates, caches, grads):
        """Backprop one timestep.

        ``dstates`` holds the gradients flowing into each layer's (h, c) from
        the following timestep. Returns ``(dx, dstates_prev)``.
        """
        dprev = [None] * self.depth
        dh_in = dh_top
        for l in reversed(range(self.depth)):
            dh = dstates[l][0] + dh_in
            dx, dh_prev, dc_prev = self.cells[l].step_backward(dh, dstates[l][1], caches[l], grads)
            dprev[l] = (dh_prev, dc_prev)
            dh_in = dx
        return dh_in, dprev

    def zero_dstates(self, batch):
        return [(np.zeros((batch, self.d_h)), np.zeros((batch, self.d_h))) for _ in self.cells]

    def run_sequence(self, inputs, train=True):
        """Run a precomputed ``T x B x d_in`` input through the stack from zero state.

        Returns ``(hiddens T x B x d_h, final_states, caches)``.
        """
        inputs = np.asarray(inputs, dtype=DTYPE)
        if inputs.ndim != 3 or inputs.shape[0] < 1:
            raise DimensionError("run_sequence expects a non-empty T x B x d input")
        states = self.initial_state(inputs.shape[1])
        hiddens, caches = [], []
        for t in range(inputs.shape[0]):
            states, c = self.step(inputs[t], states, t + 1, train)
            hiddens.append(states[-1].h)
            caches.append(c)
        return np.stack(hiddens), states, caches

    def run_sequence_backward(self, dhiddens, caches, grads, dfinal=None):
        """BPTT for :meth:`run_sequence`; returns the input gradient."""
        steps, batch = dhiddens.shape[:2]
        dstates = self.zero_dstates(batch) if dfinal is None else dfinal
        dinputs = np.zeros((steps, batch, self.d_in))
        for t in reversed(range(steps)):
            dinputs[t], dstates = self.step_backward(dhiddens[t], dstates, caches[t], grads)
        return dinputs
