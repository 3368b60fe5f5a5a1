"""Two-state correct/incorrect chain behind label injection.

With injection probability ``beta`` the word fed at step ``t`` is correct with
probability ``beta + (1 - beta) * gamma_{t-1}``; the next emitted tag is then
correct with probability ``p`` (after a correct input) or ``q`` (after an
incorrect one). Iterating gives

    gamma_t = p * (beta + (1 - beta) * gamma_{t-1}) + q * (1 - beta) * (1 - gamma_{t-1})

whose fixed point is ``(p*beta + q*(1 - beta)) / (1 - (1 - beta)*(p - q))``.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Chain parameters outside [0, 1]."""


class DegeneracyError(ArithmeticError):
    """The recursion has no unique fixed point."""


@dataclass(frozen=True)
class ChainSpec:
    p: float
    q: float
    beta: float = 0.0
    gamma0_init: float = 0.5

    def __post_init__(self):
        for name in ("p", "q", "beta", "gamma0_init"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    @property
    def contraction(self):
        """Slope of the affine recursion map."""
        return (1.0 - self.beta) * (self.p - self.q)

    @property
    def degenerate(self):
        return abs(self.contraction) >= 1.0


def gamma_step(gamma_prev, spec):
    if not 0.0 <= gamma_prev <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma_prev}")
    p, q, b = spec.p, spec.q, spec.beta
    return p * (b + (1.0 - b) * gamma_prev) + q * (1.0 - b) * (1.0 - gamma_prev)


def iterate_gamma(spec, steps, gamma0=None):
    g = spec.gamma0_init if gamma0 is None else gamma0
    for _ in range(steps):
        g = gamma_step(g, spec)
    return g


def gamma_fixed_point(spec):
    if spec.degenerate:
        raise DegeneracyError(
            f"|(1-beta)(p-q)| = {abs(spec.contraction)} >= 1: every gamma is a fixed point "
            "or the chain oscillates")
    p, q, b = spec.p, spec.q, spec.beta
    return (p * b + q * (1.0 - b)) / (1.0 - (1.0 - b) * (p - q))


def simulate_chain(spec, steps=100, trials=100_000, seed=0):
    """Sample ``trials`` independent chains for ``steps`` steps.

    Returns ``(estimate, stderr)`` of the probability that the terminal tag
    is correct.
    """
    rng = np.random.default_rng(seed)
    correct = rng.random(trials) < spec.gamma0_init
    # after a correct tag the input is correct whether or not the gate opens;
    # after an incorrect one it is correct exactly when the gate opens
    after_wrong = spec.beta * spec.p + (1.0 - spec.beta) * spec.q
    threshold = np.array([after_wrong, spec.p])
    for _ in range(steps):
        correct = rng.random(trials) < threshold[correct.view(np.uint8)]
    est = float(correct.mean())
    return est, math.sqrt(est * (1.0 - est) / trials)


def classify_trend(values, tol=1e-12):
    diffs = np.diff(np.asarray(values, dtype=float))
    if np.all(np.abs(diffs) <= tol):
        return "constant"
    if np.all(diffs > tol):
        return "increasing"
    if np.all(diffs < -tol):
        return "decreasing"
    return "mixed"


def expected_trend(p, q):
    """Direction of gamma(beta) implied by the sign of p - q."""
    if p > q:
        return "increasing"
    if p < q:
        return "decreasing"
    return "constant"


@dataclass
class OrderingRow:
    p: float
    q: float
    beta: float
    gamma_closed: float
    gamma_mc: float
    stderr: float
    verdict: str


def ordering_report(ps, qs, betas, trials=100_000, steps=100, seed=0):
    """Closed-form and sampled gamma for every ``(p, q, beta)`` cell.

    The verdict of a ``(p, q)`` pair is the observed trend of gamma over the
    sorted betas, or ``degenerate`` if any cell lacks a unique fixed point.
    Monte-Carlo seeds are derived from ``seed`` and the cell index.
    """
    betas = sorted(betas)
    seeds = np.random.SeedSequence(seed).spawn(len(ps) * len(qs) * len(betas))
    rows, k = [], 0
    for p in ps:
        for q in qs:
            cells = []
            for b in betas:
                spec = ChainSpec(p, q, b)
                try:
                    closed = gamma_fixed_point(spec)
                except DegeneracyError:
                    closed = float("nan")
                mc, se = simulate_chain(spec, steps, trials, seeds[k])
                k += 1
                cells.append(OrderingRow(p, q, b, closed, mc, se, ""))
            closed_vals = [c.gamma_closed for c in cells]
            verdict = "degenerate" if any(math.isnan(v) for v in closed_vals) \
                else classify_trend(closed_vals)
            for c in cells:
                c.verdict = verdict
            rows.extend(cells)
    return rows


CSV_HEADER = ("p", "q", "beta", "gamma_closed", "gamma_mc", "stderr", "verdict")


def report_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.p, r.q, r.beta, repr(r.gamma_closed), repr(r.gamma_mc),
                    repr(r.stderr), r.verdict])
    return buf.getvalue()
