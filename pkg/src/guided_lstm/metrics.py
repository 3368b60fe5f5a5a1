"""Hit@k, PERR and GAP over per-video score vectors.

Rankings break score ties by ascending label id; GAP additionally orders its
global pool by video index then label id among equal scores, so every metric
is a deterministic function of its inputs.
"""

import csv
import io
from fractions import Fraction

import numpy as np


class MetricDomainError(ValueError):
    """A metric parameter is out of range."""


class UndefinedMetricError(ValueError):
    """The metric has no defined value for these inputs."""


def _rank(scores):
    """Label ids of one video ordered best first, ties by ascending id."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _as_sets(truths):
    out = [set(int(l) for l in t) for t in truths]
    if any(not t for t in out):
        raise ValueError("every video needs at least one ground-truth label")
    return out


def hit_at_k(preds, truths, k=1):
    preds = np.asarray(preds, dtype=np.float64)
    if k < 1:
        raise MetricDomainError("k must be >= 1")
    if k > preds.shape[1]:
        raise MetricDomainError(f"k={k} exceeds vocabulary size {preds.shape[1]}")
    truths = _as_sets(truths)
    hits = [bool(truth.intersection(_rank(s)[:k].tolist())) for s, truth in zip(preds, truths)]
    return float(np.mean(hits))


def perr(preds, truths):
    """Mean precision within the top-|truth| predictions of each video.

    Accumulated as an exact rational so the result is correctly rounded.
    """
    preds = np.asarray(preds, dtype=np.float64)
    truths = _as_sets(truths)
    total = sum(Fraction(len(truth.intersection(_rank(s)[:len(truth)].tolist())), len(truth))
                for s, truth in zip(preds, truths))
    return float(total / len(truths))


def gap_pool(preds, truths, top_n=20, offset=0):
    """Each video's top-n ``(score, video, label, correct)`` entries.

    ``offset`` shifts video indices so shards can be merged into one pool.
    """
    if top_n < 1:
        raise MetricDomainError("top_n must be >= 1")
    preds = np.asarray(preds, dtype=np.float64)
    truths = _as_sets(truths)
    n = min(top_n, preds.shape[1])
    scores, videos, labels, correct = [], [], [], []
    for v, (s, truth) in enumerate(zip(preds, truths)):
        top = _rank(s)[:n]
        scores.append(s[top])
        videos.append(np.full(n, v + offset))
        labels.append(top)
        correct.append(np.array([int(l) in truth for l in top]))
    if not scores:
        return np.zeros((0,)), np.zeros((0,), int), np.zeros((0,), int), np.zeros((0,), bool)
    return (np.concatenate(scores), np.concatenate(videos), np.concatenate(labels),
            np.concatenate(correct))


def gap_from_pool(scores, videos, labels, correct):
    if len(scores) == 0:
        raise UndefinedMetricError("GAP of an empty prediction pool")
    order = np.lexsort((labels, videos, -scores))
    hits = np.asarray(correct, dtype=np.float64)[order]
    n_pos = hits.sum()
    if n_pos == 0:
        return 0.0
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float((precision * hits).sum() / n_pos)


def gap(preds, truths, top_n=20):
    """Global average precision over the pooled top-n predictions of every video.

    Recall is measured against the number of positives inside the pool.
    """
    return gap_from_pool(*gap_pool(preds, truths, top_n))


METRIC_NAMES = ("hit1", "perr", "gap")


def evaluate_predictions(preds, truths, top_n=20):
    return {"hit1": hit_at_k(preds, truths, 1), "perr": perr(preds, truths),
            "gap": gap(preds, truths, top_n)}


def format_report(report, title=None):
    """Plain-text table with percentages at one decimal."""
    lines = [title] if title else []
    labels = {"hit1": "Hit@1", "perr": "PERR", "gap": "GAP"}
    for key, value in report.items():
        lines.append(f"{labels.get(key, key):<8}{100.0 * value:6.1f}")
    return "\n".join(lines) + "\n"


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "value"))
    for key, value in report.items():
        w.writerow((key, repr(float(value))))
    return buf.getvalue()
