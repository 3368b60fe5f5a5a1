"""Seeded multi-label stand-in for the video-level dataset.

Every label owns a latent prototype; a video's pooled feature is the mean of
its labels' prototypes plus isotropic Gaussian noise, so the label set is
recoverable from the feature by construction.
"""

from dataclasses import dataclass

import numpy as np

from .example import AUDIO_DIM, RGB_DIM, VideoExample


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticTaskSpec:
    vocab_size: int = 50
    rgb_dim: int = RGB_DIM
    audio_dim: int = AUDIO_DIM
    mean_tags: float = 3.4
    max_tags: int = 30
    noise: float = 0.5
    seed: int = 0

    @property
    def dim(self):
        return self.rgb_dim + self.audio_dim

    def validate(self):
        if self.vocab_size < self.max_tags:
            raise SyntheticSpecError("vocabulary smaller than the maximum tag count")
        if not 1.0 <= self.mean_tags <= self.max_tags:
            raise SyntheticSpecError("mean tag count must lie in [1, max_tags]")
        if self.dim < 1 or self.noise < 0:
            raise SyntheticSpecError("feature dimension must be positive and noise non-negative")


def prototypes(spec):
    rng = np.random.default_rng([spec.seed, 0])
    return rng.standard_normal((spec.vocab_size, spec.dim))


def draw_labels(spec, index):
    """Tag count is ``1 + Poisson(mean_tags - 1)`` capped at ``max_tags``;
    tags are drawn uniformly without replacement."""
    rng = np.random.default_rng([spec.seed, 1, index])
    k = min(1 + int(rng.poisson(spec.mean_tags - 1.0)), spec.max_tags)
    return tuple(sorted(int(l) for l in rng.choice(spec.vocab_size, size=k, replace=False)))


@dataclass
class VideoDataset:
    ids: list
    features: np.ndarray
    labels: list

    def __len__(self):
        return len(self.ids)

    def subset(self, index):
        index = np.asarray(index)
        return VideoDataset([self.ids[i] for i in index], self.features[index],
                            [self.labels[i] for i in index])

    def to_examples(self, rgb_dim):
        for vid, f, labels in zip(self.ids, self.features, self.labels):
            yield VideoExample(vid, frozenset(labels), f[:rgb_dim], f[rgb_dim:])

    @classmethod
    def from_examples(cls, examples):
        ids, feats, labels = [], [], []
        for ex in examples:
            ids.append(ex.id)
            feats.append(ex.feature)
            labels.append(tuple(sorted(ex.labels)))
        features = np.stack(feats) if feats else np.zeros((0, 0))
        return cls(ids, features, labels)

    def multihot(self, vocab_size):
        out = np.zeros((len(self), vocab_size))
        for row, labels in enumerate(self.labels):
            out[row, list(labels)] = 1.0
        return out


def generate_synthetic(spec, n, start=0):
    """Videos ``start .. start + n - 1`` of the task; each is a pure function of
    ``(spec, index)`` so disjoint index ranges give disjoint splits."""
    spec.validate()
    protos = prototypes(spec)
    feats = np.empty((n, spec.dim))
    labels, ids = [], []
    for row, index in enumerate(range(start, start + n)):
        tags = draw_labels(spec, index)
        noise_rng = np.random.default_rng([spec.seed, 2, index])
        feats[row] = protos[list(tags)].mean(axis=0) + spec.noise * noise_rng.standard_normal(spec.dim)
        labels.append(tags)
        ids.append(f"syn{index:08d}".encode())
    return VideoDataset(ids, feats, labels)
