"""Model assembly: translator and/or classifier head behind one interface."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .classifiers import LogisticHead, MoeHead
from .layers import BatchNormState, batch_norm, batch_norm_backward
from .translator import ConfigError, Translator, canonicalize

MODEL_KINDS = ("base-maxpool", "guided-logistic", "guided-moe", "logistic", "moe")
CELL_KINDS = ("lstm", "bnlstm")


@dataclass
class TrainConfig:
    model: str = "guided-logistic"
    cell: str = "lstm"
    bn_feature: bool = False
    bn_projection: bool = False
    beta: float = 0.0
    d_h: int = 256
    d_w: int = 64
    depth: int = 2
    batch_size: int = 64
    learning_rate: float = 1e-3
    iterations: int = 1000
    seed: int = 0
    loss_word: str = ""          # empty: softmax for base-maxpool, binary otherwise
    lam: float = 1.0
    n_experts: int = 2
    t_cap: int = 32
    t_max: int = 32
    bn_decay: float = 0.999
    bn_eps: float = 1e-5
    clip_norm: float = 5.0
    eval_every: int = 0
    eval_top_n: int = 20

    def resolved(self):
        cfg = dataclasses.replace(self)
        if not cfg.loss_word:
            cfg.loss_word = "softmax" if cfg.model == "base-maxpool" else "binary"
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)
        need(self.model in MODEL_KINDS, f"model must be one of {MODEL_KINDS}")
        need(self.cell in CELL_KINDS, f"cell must be one of {CELL_KINDS}")
        need(0.0 <= self.beta <= 1.0, "beta must lie in [0, 1]")
        need(self.loss_word in ("softmax", "binary"), "loss_word must be softmax or binary")
        for name in ("d_h", "d_w", "depth", "batch_size", "n_experts", "t_cap", "t_max", "eval_top_n"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        need(self.iterations >= 0 and self.eval_every >= 0, "iterations/eval_every must be >= 0")
        need(self.learning_rate >= 0.0, "learning_rate must be >= 0")
        need(self.lam >= 0.0, "lam must be >= 0")
        need(0.0 < self.bn_decay < 1.0, "bn_decay must lie in (0, 1)")
        need(self.bn_eps > 0.0, "bn_eps must be > 0")
        need(self.clip_norm > 0.0, "clip_norm must be > 0")
        needs_batch_stats = self.cell == "bnlstm" or self.bn_feature or self.bn_projection
        need(not needs_batch_stats or self.batch_size >= 2, "batch norm needs batch_size >= 2")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


class VideoModel:
    def __init__(self, config, vocab_size, feature_dim):
        cfg = config.resolved()
        self.config, self.V, self.d_x = cfg, vocab_size, feature_dim
        rng = np.random.default_rng([cfg.seed, 0])
        self.translator = None
        if cfg.model in ("base-maxpool", "guided-logistic", "guided-moe"):
            self.translator = Translator(
                vocab_size, feature_dim, d_w=cfg.d_w, d_h=cfg.d_h, depth=cfg.depth, cell=cfg.cell,
                loss_word=cfg.loss_word, bn_projection=cfg.bn_projection, t_cap=cfg.t_cap,
                t_max=cfg.t_max, bn_decay=cfg.bn_decay, bn_eps=cfg.bn_eps, rng=rng)
        self.head = None
        head_in = feature_dim if self.translator is None else cfg.d_h
        if cfg.model in ("guided-logistic", "logistic"):
            self.head = LogisticHead(head_in, vocab_size)
        elif cfg.model in ("guided-moe", "moe"):
            self.head = MoeHead(head_in, vocab_size, cfg.n_experts, rng=rng)
        self.feature_bn = None
        if cfg.bn_feature and self.head is not None:
            self.feature_bn = BatchNormState.create(head_in, decay=cfg.bn_decay, eps=cfg.bn_eps)

    @property
    def params(self):
        out = {}
        if self.translator is not None:
            out.update(self.translator.params)
        if self.feature_bn is not None:
            out["feature_bn/gamma"] = self.feature_bn.gamma
            out["feature_bn/beta"] = self.feature_bn.beta
        if self.head is not None:
            out.update(self.head.params)
        return out

    def bn_states(self):
        out = {} if self.translator is None else dict(self.translator.bn_states())
        if self.feature_bn is not None:
            out["feature_bn"] = self.feature_bn
        return out

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def loss_and_grads(self, x, labels, rng, update_stats=True):
        """Training-mode losses and gradients of ``loss_word + lam * loss_class``.

        Returns ``(loss_word, loss_class, grads, guided_output)``.
        """
        cfg = self.config
        grads = self.zero_grads()
        loss_word = loss_class = 0.0
        out = None
        snapshot = None if update_stats else self._snapshot_stats()
        if self.translator is not None:
            seqs = [canonicalize(l, self.V) for l in labels]
            out = self.translator.guided_forward(x, seqs, cfg.beta, rng, train=True)
            loss_word = out.loss_word
        dh_final = None
        if self.head is not None:
            f = x if out is None else out.h_final
            bn_cache = None
            if self.feature_bn is not None:
                f, bn_cache = batch_norm(f, self.feature_bn, True)
            loss_class, head_cache = self.head.loss(f, self._targets(labels))
            df = self.head.backward(head_cache, grads, scale=cfg.lam)
            if bn_cache is not None:
                df = batch_norm_backward(df, bn_cache, self.feature_bn,
                                         grads["feature_bn/gamma"], grads["feature_bn/beta"])
            dh_final = df
        if out is not None:
            self.translator.guided_backward(out, grads, dh_final if self.head is not None else None)
        if snapshot is not None:
            self._restore_stats(snapshot)
        return loss_word, loss_class, grads, out

    def _snapshot_stats(self):
        return {k: (s.pop_mean.copy(), s.pop_var.copy()) for k, s in self.bn_states().items()}

    def _restore_stats(self, snap):
        for k, s in self.bn_states().items():
            s.pop_mean[...], s.pop_var[...] = snap[k]

    def total_loss(self, x, labels, rng):
        """Training objective, forward only and without touching BN statistics."""
        cfg = self.config
        snapshot = self._snapshot_stats()
        loss = 0.0
        f = x
        if self.translator is not None:
            out = self.translator.guided_forward(x, labels, cfg.beta, rng, train=True)
            loss += out.loss_word
            f = out.h_final
        if self.head is not None:
            if self.feature_bn is not None:
                f, _ = batch_norm(f, self.feature_bn, True)
            loss += cfg.lam * self.head.loss(f, self._targets(labels))[0]
        self._restore_stats(snapshot)
        return loss

    def word_accuracy(self, x, labels, rng, beta=None):
        """Share of prediction steps whose argmax word is the target, under
        training-time feeding at ``beta`` (the configured value by default)."""
        if self.translator is None:
            raise ConfigError("word accuracy needs a translator model")
        beta = self.config.beta if beta is None else beta
        seqs = [canonicalize(l, self.V) for l in labels]
        snapshot = self._snapshot_stats()
        out = self.translator.guided_forward(x, seqs, beta, rng, train=True)
        self._restore_stats(snapshot)
        hits = total = 0
        for s, logits in enumerate(out.logits):
            pred = self.translator._argmax_word(logits)
            for b, seq in enumerate(seqs):
                if s + 1 < len(seq):
                    hits += int(pred[b] == seq.ids[s + 1])
                    total += 1
        return hits / total

    def _targets(self, labels):
        targets = np.zeros((len(labels), self.V))
        for row, l in enumerate(labels):
            targets[row, list(l)] = 1.0
        return targets

    def features(self, x):
        return x if self.translator is None else self.translator.extract_feature(x)

    def predict(self, x, chunk=512):
        """Inference-mode scores ``(B, V)``: self-feedback decoding, population
        BN statistics."""
        x = np.asarray(x, dtype=np.float64)
        parts = []
        for start in range(0, len(x), chunk):
            xb = x[start:start + chunk]
            if self.head is None:
                parts.append(self.translator.base_predict(xb))
                continue
            f = self.features(xb)
            if self.feature_bn is not None:
                f, _ = batch_norm(f, self.feature_bn, False)
            parts.append(self.head.predict(f))
        return np.concatenate(parts) if parts else np.zeros((0, self.V))


def global_norm(grads):
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.b1, self.b2
        corr = np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * corr * m / (np.sqrt(v) + self.eps)
