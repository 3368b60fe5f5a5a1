from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guided_lstm.gating import (
    CSV_HEADER,
    ChainSpec,
    DegeneracyError,
    DomainError,
    classify_trend,
    expected_trend,
    gamma_fixed_point,
    gamma_step,
    iterate_gamma,
    ordering_report,
    report_csv,
    simulate_chain,
)

prob = st.floats(0.0, 1.0)


def exact_limit(p, q, beta, gamma0=Fraction(1, 2), steps=400):
    """Iterate the recursion in exact rationals."""
    p, q, b = Fraction(p), Fraction(q), Fraction(beta)
    g = gamma0
    for _ in range(steps):
        g = p * (b + (1 - b) * g) + q * (1 - b) * (1 - g)
    return g


class TestStep:
    def test_state_independent(self):
        assert gamma_step(0.13, ChainSpec(0.4, 0.4)) == pytest.approx(0.4, abs=1e-15)

    def test_full_injection(self):
        assert gamma_step(0.0, ChainSpec(0.7, 0.2, beta=1.0)) == 0.7

    def test_hand_value(self):
        assert gamma_step(0.5, ChainSpec(0.9, 0.3)) == pytest.approx(0.6, abs=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            ChainSpec(1.2, 0.3)
        with pytest.raises(DomainError):
            gamma_step(1.5, ChainSpec(0.5, 0.3))

    @given(prob, prob, prob, prob)
    def test_stays_in_unit_interval(self, p, q, b, g):
        assert 0.0 <= gamma_step(g, ChainSpec(p, q, b)) <= 1.0


class TestFixedPoint:
    @pytest.mark.parametrize("beta,expected", [
        (0.0, Fraction(3, 4)), (0.5, Fraction(6, 7)), (1.0, Fraction(9, 10))])
    def test_spot_values(self, beta, expected):
        assert exact_limit(Fraction(9, 10), Fraction(3, 10), Fraction(beta)) - expected < Fraction(1, 10**30)
        assert gamma_fixed_point(ChainSpec(0.9, 0.3, beta)) == pytest.approx(float(expected), abs=1e-12)

    def test_reversed_case(self):
        assert gamma_fixed_point(ChainSpec(0.3, 0.9)) == pytest.approx(0.5625, abs=1e-12)
        assert gamma_fixed_point(ChainSpec(0.3, 0.9, 1.0)) == pytest.approx(0.3, abs=1e-12)

    def test_beta_one_is_p(self):
        assert gamma_fixed_point(ChainSpec(0.37, 0.81, 1.0)) == 0.37

    def test_degenerate(self):
        with pytest.raises(DegeneracyError):
            gamma_fixed_point(ChainSpec(1.0, 0.0, 0.0))

    @settings(max_examples=200)
    @given(prob, prob, prob)
    def test_is_fixed_point(self, p, q, b):
        spec = ChainSpec(p, q, b)
        if spec.degenerate:
            return
        g = gamma_fixed_point(spec)
        assert abs(gamma_step(g, spec) - g) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 0.95), st.floats(0.0, 0.95), prob, prob)
    def test_iteration_converges(self, p, q, b, g0):
        spec = ChainSpec(p, q, b)
        assert abs(iterate_gamma(spec, 10_000, g0) - gamma_fixed_point(spec)) < 1e-12


class TestSimulation:
    def test_state_independent(self):
        est, se = simulate_chain(ChainSpec(0.4, 0.4), trials=100_000, seed=3)
        assert abs(est - 0.4) < 3 * se

    def test_matches_closed_form(self):
        est, se = simulate_chain(ChainSpec(0.9, 0.3), trials=100_000, seed=0)
        assert abs(est - 0.75) < 3 * se

    def test_injection(self):
        spec = ChainSpec(0.3, 0.9, 0.5)
        est, se = simulate_chain(spec, trials=100_000, seed=1)
        assert abs(est - gamma_fixed_point(spec)) < 3 * se

    def test_seeded(self):
        spec = ChainSpec(0.6, 0.2, 0.3)
        assert simulate_chain(spec, 50, 1000, 5) == simulate_chain(spec, 50, 1000, 5)


class TestOrdering:
    def test_trends(self):
        assert classify_trend([0.1, 0.2, 0.3]) == "increasing"
        assert classify_trend([0.3, 0.2]) == "decreasing"
        assert classify_trend([0.4, 0.4]) == "constant"
        assert classify_trend([0.1, 0.3, 0.2]) == "mixed"
        assert expected_trend(0.9, 0.3) == "increasing"
        assert expected_trend(0.3, 0.9) == "decreasing"
        assert expected_trend(0.4, 0.4) == "constant"

    def test_report(self):
        rows = ordering_report([0.9, 0.3, 0.4], [0.3, 0.9, 0.4], [1.0, 0.0, 0.5],
                               trials=2000, steps=30)
        verdicts = {(r.p, r.q): r.verdict for r in rows}
        assert verdicts[(0.9, 0.3)] == "increasing"
        assert verdicts[(0.3, 0.9)] == "decreasing"
        assert verdicts[(0.4, 0.4)] == "constant"
        cell = [r for r in rows if (r.p, r.q) == (0.9, 0.3)]
        assert [r.beta for r in cell] == [0.0, 0.5, 1.0]
        np.testing.assert_allclose([r.gamma_closed for r in cell], [0.75, 6 / 7, 0.9])

    def test_degenerate_flagged(self):
        rows = ordering_report([1.0], [0.0], [0.0, 0.5], trials=100, steps=5)
        assert {r.verdict for r in rows} == {"degenerate"}

    def test_csv(self):
        text = report_csv(ordering_report([0.9], [0.3], [0.0], trials=100, steps=5))
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_HEADER)
        fields = lines[1].split(",")
        assert fields[:3] == ["0.9", "0.3", "0.0"] and fields[-1] == "constant"
        assert float(fields[3]) == pytest.approx(0.75, abs=1e-12)
