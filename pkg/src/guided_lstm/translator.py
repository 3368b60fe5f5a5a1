"""Label-sentence translator.

A label set becomes an ascending word sequence wrapped in BOS/EOS. The pooled
video feature is concatenated with a word embedding at every step and fed to a
recurrent stack; a shared projection maps each top hidden state to logits
over the vocabulary plus the two virtual tokens. Before each step a Bernoulli
gate chooses between the ground-truth previous word (probability ``beta``) and
the model's own argmax prediction. One extra step fed with EOS produces the
final hidden state used as a classification feature.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .layers import (
    BatchNormState,
    batch_norm,
    batch_norm_backward,
    embed_backward,
    loss_binary_ce,
    loss_softmax_ce,
    one_hot,
    word_projection,
    word_projection_backward,
)
from .recurrent import RecurrentStack
from .tensor_math import DTYPE, DimensionError, orthogonal, softmax


class LabelError(ValueError):
    """A label set cannot be turned into a word sequence."""


class ConfigError(ValueError):
    """Invalid model or gate configuration."""


@dataclass(frozen=True)
class WordSequence:
    ids: tuple

    @property
    def tags(self):
        return self.ids[1:-1]

    def __len__(self):
        return len(self.ids)


def canonicalize(labels, vocab_size):
    """Sort a label set ascending and wrap it as ``[BOS, y_1..y_T, EOS]``."""
    if isinstance(labels, WordSequence):
        labels = labels.tags
    tags = sorted({int(l) for l in labels})
    if not tags:
        raise LabelError("empty label set")
    if tags[0] < 0 or tags[-1] >= vocab_size:
        raise LabelError(f"label ids must lie in [0, {vocab_size})")
    return WordSequence((vocab_size, *tags, vocab_size + 1))


@dataclass(frozen=True)
class GateConfig:
    beta: float
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")


class GuidedOutput(NamedTuple):
    logits: np.ndarray      # (S, B, V+2) prediction-step logits
    h_final: np.ndarray     # (B, d_h)
    loss_word: float
    word_ids: np.ndarray    # (S+1, B) word fed at every step
    gate_open: np.ndarray   # (S+1, B) bool, True where the ground truth was injected
    cache: tuple


class Translator:
    def __init__(self, vocab_size, d_x, d_w=64, d_h=256, depth=2, cell="lstm",
                 loss_word="softmax", bn_projection=False, t_cap=32, t_max=32,
                 bn_decay=0.999, bn_eps=1e-5, rng=None):
        if loss_word not in ("softmax", "binary"):
            raise ConfigError(f"loss_word must be 'softmax' or 'binary', got {loss_word!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.V, self.d_x, self.d_w, self.d_h = vocab_size, d_x, d_w, d_h
        self.bos, self.eos = vocab_size, vocab_size + 1
        self.v_ext = vocab_size + 2
        self.loss_word_kind = loss_word
        self.t_max = t_max
        self.embedding = orthogonal(self.v_ext, d_w, rng)
        bn_kwargs = dict(t_cap=t_cap, decay=bn_decay, eps=bn_eps) if cell == "bnlstm" else {}
        self.stack = RecurrentStack(d_x + d_w, d_h, depth=depth, kind=cell, rng=rng, name="rnn",
                                    **bn_kwargs)
        self.proj_w = orthogonal(d_h, self.v_ext, rng)
        # a batch norm on the logits makes a projection bias redundant
        self.proj_b = np.zeros(self.v_ext, dtype=DTYPE)
        self.proj_bn = (BatchNormState.create(self.v_ext, decay=bn_decay, eps=bn_eps)
                        if bn_projection else None)

    @property
    def params(self):
        out = {"embed": self.embedding}
        out.update(self.stack.params)
        out["proj/W"] = self.proj_w
        if self.proj_bn is None:
            out["proj/b"] = self.proj_b
        if self.proj_bn is not None:
            out["proj_bn/gamma"] = self.proj_bn.gamma
            out["proj_bn/beta"] = self.proj_bn.beta
        return out

    def bn_states(self):
        out = self.stack.bn_states()
        if self.proj_bn is not None:
            out["proj_bn"] = self.proj_bn
        return out

    # -- shared pieces -------------------------------------------------------

    def _input_parts(self, x):
        """Bottom-layer input projection split into its feature part (fixed
        over the sequence) and a per-word table."""
        if x.ndim != 2 or x.shape[1] != self.d_x:
            raise DimensionError(f"feature batch {x.shape} expected (B, {self.d_x})")
        w = self.stack.cells[0].params[f"{self.stack.cells[0].name}/W"]
        return x @ w[:self.d_x], self.embedding @ w[self.d_x:]

    def _step(self, parts, word, states, t, train):
        feat_w, word_w = parts
        return self.stack.step(None, states, t, train, xw=feat_w + word_w[word])

    def _project(self, h, train):
        logits = word_projection(h, self.proj_w, self.proj_b)
        bn_cache = None
        if self.proj_bn is not None:
            logits, bn_cache = batch_norm(logits, self.proj_bn, train)
        return logits, bn_cache

    def _argmax_word(self, logits):
        masked = logits.copy()
        masked[:, self.bos] = -np.inf  # BOS is never a valid next word
        return np.argmax(masked, axis=1)

    # -- training path -------------------------------------------------------

    def guided_forward(self, x, sequences, beta, rng, train=True):
        """Run the gated translator over a batch of canonical word sequences.

        ``loss_word`` sums the per-step losses, each averaged over the batch
        with padded steps masked out. In infer mode the gate is always closed.
        """
        if not 0.0 <= beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {beta}")
        x = np.asarray(x, dtype=DTYPE)
        seqs = [s if isinstance(s, WordSequence) else canonicalize(s, self.V) for s in sequences]
        batch = len(seqs)
        if x.shape[0] != batch:
            raise DimensionError(f"{x.shape[0]} features for {batch} sequences")
        lengths = np.array([len(s.tags) for s in seqs])
        n_pred = int(lengths.max()) + 1
        ids = np.full((batch, n_pred + 1), self.eos, dtype=np.int64)
        for b, s in enumerate(seqs):
            ids[b, :len(s)] = s.ids
        draws = rng.random((n_pred + 1, batch))
        parts = self._input_parts(x)
        gate = (draws < beta) if train else np.zeros_like(draws, dtype=bool)

        states = self.stack.initial_state(batch)
        word = np.full(batch, self.bos, dtype=np.int64)
        h_final = np.zeros((batch, self.d_h))
        words, step_caches, hs, logits_all, bn_caches, dlogits = [], [], [], [], [], []
        gate_used = np.zeros((n_pred + 1, batch), dtype=bool)
        loss = 0.0
        for s in range(n_pred + 1):
            if s > 0:
                in_seq = s <= lengths
                use_gt = gate[s] & in_seq
                gate_used[s] = use_gt
                fed = np.where(use_gt, ids[:, s], self._argmax_word(logits_all[-1]))
                word = np.where(in_seq, fed, self.eos)
            words.append(word)
            states, caches = self._step(parts, word, states, s + 1, train)
            step_caches.append(caches)
            h = states[-1].h
            hs.append(h)
            done = lengths + 1 == s
            h_final[done] = h[done]
            if s == n_pred:
                break
            logits, bn_cache = self._project(h, train)
            valid = (s <= lengths).astype(DTYPE)
            target = np.where(s <= lengths, ids[:, s + 1], 0)
            if self.loss_word_kind == "softmax":
                l, dl = loss_softmax_ce(logits, target, valid)
            else:
                l, dl = loss_binary_ce(logits, one_hot(target, self.v_ext), valid)
            loss += l
            logits_all.append(logits)
            bn_caches.append(bn_cache)
            dlogits.append(dl)
        cache = (x, lengths, words, step_caches, hs, bn_caches, dlogits)
        return GuidedOutput(np.stack(logits_all), h_final, loss, np.stack(words), gate_used, cache)

    def guided_backward(self, out, grads, dh_final=None, loss_scale=1.0):
        """Accumulate parameter gradients of ``loss_scale * loss_word`` plus the
        contribution of ``dh_final`` (gradient w.r.t. ``out.h_final``)."""
        x, lengths, words, step_caches, hs, bn_caches, dlogits = out.cache
        batch = len(lengths)
        n_pred = len(dlogits)
        dstates = self.stack.zero_dstates(batch)
        dfeat_w = np.zeros((batch, 4 * self.d_h))
        dword_w = np.zeros((self.v_ext, 4 * self.d_h))
        for s in reversed(range(n_pred + 1)):
            dh_top = np.zeros((batch, self.d_h))
            if s < n_pred:
                dl = dlogits[s] * loss_scale
                if self.proj_bn is not None:
                    dl = batch_norm_backward(dl, bn_caches[s], self.proj_bn,
                                             grads["proj_bn/gamma"], grads["proj_bn/beta"])
                dbias = grads["proj/b"] if self.proj_bn is None else np.zeros_like(self.proj_b)
                dh_top += word_projection_backward(hs[s], dl, self.proj_w, grads["proj/W"], dbias)
            if dh_final is not None:
                done = lengths + 1 == s
                dh_top[done] += dh_final[done]
            dxw, dstates = self.stack.step_backward(dh_top, dstates, step_caches[s], grads)
            dfeat_w += dxw
            embed_backward(words[s], dxw, dword_w)
        name = self.stack.cells[0].name
        w = self.stack.cells[0].params[f"{name}/W"]
        dw = grads[f"{name}/W"]
        dw[:self.d_x] += x.T @ dfeat_w
        dw[self.d_x:] += self.embedding.T @ dword_w
        grads["embed"] += dword_w @ w[self.d_x:].T

    # -- inference path ------------------------------------------------------

    def decode(self, x):
        """Greedy decoding with self-feedback and population BN statistics.

        Runs at most ``t_max`` prediction steps per sample, stopping a sample
        once it emits EOS, then one EOS-fed step. Returns
        ``(distributions, masks, h_final)`` where ``masks[k]`` marks the
        samples that were still emitting at prediction step ``k``.
        """
        x = np.asarray(x, dtype=DTYPE)
        batch = x.shape[0]
        states = self.stack.initial_state(batch)
        word = np.full(batch, self.bos, dtype=np.int64)
        active = np.ones(batch, dtype=bool)
        pending = np.ones(batch, dtype=bool)
        h_final = np.zeros((batch, self.d_h))
        dists, masks = [], []
        parts = self._input_parts(x)
        for s in range(self.t_max + 1):
            states, _ = self._step(parts, word, states, s + 1, False)
            h = states[-1].h
            capture = pending & ~active
            h_final[capture] = h[capture]
            pending &= ~capture
            if not pending.any():
                break
            logits, _ = self._project(h, False)
            dists.append(softmax(logits))
            masks.append(active.copy())
            nxt = self._argmax_word(logits)
            nxt[~active] = self.eos
            if s == self.t_max - 1:
                nxt[:] = self.eos
            active &= nxt != self.eos
            word = nxt
        return dists, masks, h_final

    def base_predict(self, x):
        """Elementwise max over decoded step distributions, BOS/EOS dropped."""
        dists, masks, _ = self.decode(x)
        scores = np.zeros((np.shape(x)[0], self.V))
        for d, m in zip(dists, masks):
            scores[m] = np.maximum(scores[m], d[m, :self.V])
        return scores

    def extract_feature(self, x):
        """Final top-layer hidden state after decoding plus the EOS-fed step."""
        return self.decode(x)[2]
