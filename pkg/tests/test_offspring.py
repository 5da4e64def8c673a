import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bbmlab as bl
from bbmlab.offspring import recompose


def bisect_least_fixed_point(G, lo=0.0, hi=1.0, iters=200):
    """Independent oracle: scan for the first sign change of G(q) - q and bisect."""
    f = lambda q: G(q) - q
    grid = np.linspace(lo, hi, 2001)
    vals = f(grid)
    a = None
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            return float(grid[i])
        if vals[i] > 0.0 and vals[i + 1] <= 0.0:
            a, b = grid[i], grid[i + 1]
            break
    if a is None:
        return 1.0
    for _ in range(iters):
        m = 0.5 * (a + b)
        if f(m) > 0.0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


class TestValidate:
    def test_binary_model(self):
        G = bl.validate([0.5, 0, 0.5])
        assert G.coeffs == (0.5, 0.0, 0.5)
        assert G.degree == 2

    def test_pure_death(self):
        G = bl.validate([1.0])
        assert G.coeffs == (1.0,)
        assert G.degree == 0

    def test_sum_not_one(self):
        with pytest.raises(bl.SumNotOne) as exc:
            bl.validate([0.5, 0.6])
        assert exc.value.actual_sum == pytest.approx(1.1)

    def test_negative_coefficient(self):
        with pytest.raises(bl.NegativeCoefficient) as exc:
            bl.validate([1.2, -0.2])
        assert exc.value.index == 1

    def test_empty(self):
        with pytest.raises(bl.OffspringError):
            bl.validate([])

    def test_trailing_zeros_stripped(self):
        G = bl.validate([0.5, 0.5, 0.0, 0.0])
        assert G.coeffs == (0.5, 0.5)

    def test_json_round_trip(self):
        G = bl.validate([0.5, 0, 0.5])
        assert json.loads(G.to_json()) == [0.5, 0.0, 0.5]
        assert bl.OffspringPolynomial.from_json(G.to_json()) == G


class TestEvaluate:
    def test_constant_term(self):
        assert bl.evaluate(bl.validate([0.5, 0, 0.5]), 0.0) == 0.5

    def test_normalization(self):
        assert bl.evaluate(bl.validate([0.5, 0, 0.5]), 1.0) == pytest.approx(1.0)

    def test_fixed_point_one_third(self):
        # (1 + 3 u^2) / 4 = u at u = 1/3
        G = bl.validate([0.25, 0, 0.75])
        assert bl.evaluate(G, 1.0 / 3.0) == pytest.approx(1.0 / 3.0, abs=1e-15)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone_on_unit_interval(self, u, v):
        G = bl.validate([0.3, 0.2, 0.1, 0.4])
        lo, hi = sorted((u, v))
        assert G(lo) <= G(hi) + 1e-15
        assert -1e-15 <= G(u) <= 1.0 + 1e-15


class TestClassify:
    def test_examples(self):
        assert bl.classify(bl.validate([0.5, 0, 0.5])).regime is bl.Regime.CRITICAL
        assert bl.classify(bl.validate([0.75, 0, 0.25])).regime is bl.Regime.SUBCRITICAL
        assert bl.classify(bl.validate([0.25, 0, 0.75])).regime is bl.Regime.SUPERCRITICAL

    def test_mean_offspring(self):
        assert bl.mean_offspring(bl.validate([0.5, 0, 0.5])) == 1.0
        assert bl.mean_offspring(bl.validate([1.0])) == 0.0
        assert bl.mean_offspring(bl.validate([0.25, 0, 0.75])) == 1.5

    def test_carries_mean(self):
        crit = bl.classify(bl.validate([0.25, 0, 0.75]))
        assert crit.mean_offspring == 1.5
        assert crit.is_supercritical

    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
    @settings(max_examples=100)
    def test_zero_padding_invariant(self, raw):
        total = sum(raw)
        coeffs = [c / total for c in raw]
        G1 = bl.validate(coeffs)
        G2 = bl.validate(coeffs + [0.0, 0.0, 0.0])
        assert G1 == G2
        assert bl.classify(G1) == bl.classify(G2)


class TestExtinction:
    def test_critical_binary(self):
        # increment-based stopping leaves an error near sqrt(2 * tol) here
        q = bl.extinction_probability(bl.validate([0.5, 0, 0.5]))
        assert abs(q - 1.0) < 2e-6

    def test_subcritical(self):
        q = bl.extinction_probability(bl.validate([0.75, 0, 0.25]))
        assert abs(q - 1.0) < 1e-10

    def test_supercritical_one_third(self):
        # least root of 3 q^2 - 4 q + 1 = 0
        G = bl.validate([0.25, 0, 0.75])
        q = bl.extinction_probability(G)
        assert abs(q - 1.0 / 3.0) < 1e-10
        assert abs(q - bisect_least_fixed_point(G)) < 1e-10

    def test_pure_death(self):
        assert bl.extinction_probability(bl.validate([1.0])) == pytest.approx(1.0)

    def test_identity_has_least_fixed_point_zero(self):
        assert bl.extinction_probability(bl.validate([0.0, 1.0])) == 0.0

    def test_no_convergence(self):
        with pytest.raises(bl.NoConvergence):
            bl.extinction_probability(bl.validate([0.5, 0, 0.5]), tol=1e-12, max_iter=10)

    def test_randomized_family_against_oracle(self):
        rng = np.random.default_rng(2718)
        for _ in range(40):
            deg = int(rng.integers(1, 6))
            raw = rng.random(deg + 1) + 1e-3
            coeffs = raw / raw.sum()
            G = bl.validate(coeffs)
            m = bl.mean_offspring(G)
            if abs(m - 1.0) < 0.05:
                continue  # near-critical mixes make the iteration needlessly slow
            q = bl.extinction_probability(G)
            oracle = bisect_least_fixed_point(G)
            assert abs(q - oracle) < 1e-9
            if m < 1.0:
                assert abs(q - 1.0) < 1e-9
            else:
                assert q < 1.0 - 1e-6


class TestDecompose:
    def test_binary_reaction(self):
        lam, G = bl.decompose_reaction((3.0, -6.0, 3.0))
        assert lam == 6.0
        assert G.coeffs == (0.5, 0.0, 0.5)

    def test_recompose_round_trip(self):
        lam, G = bl.decompose_reaction((3.0, -6.0, 3.0))
        assert np.allclose(recompose(lam, G), (3.0, -6.0, 3.0), atol=1e-12)

    def test_zero_reaction_with_rate(self):
        lam, G = bl.decompose_reaction((0.0,), lam=1.0)
        assert lam == 1.0
        assert G.coeffs == (0.0, 1.0)

    def test_zero_reaction_needs_rate(self):
        with pytest.raises(bl.NotDecomposable):
            bl.decompose_reaction((0.0, 0.0))

    def test_f1_nonzero_at_one(self):
        with pytest.raises(bl.NotDecomposable):
            bl.decompose_reaction((1.0, -1.0, 1.0))

    def test_negative_side_coefficient(self):
        with pytest.raises(bl.NotDecomposable):
            bl.decompose_reaction((-1.0, 0.0, 1.0))

    def test_positive_linear_coefficient(self):
        with pytest.raises(bl.NotDecomposable):
            bl.decompose_reaction((0.5, 0.5, -1.0))

    def test_random_round_trips(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            deg = int(rng.integers(1, 6))
            raw = rng.random(deg + 1)
            G = bl.validate(raw / raw.sum())
            lam = float(rng.uniform(0.5, 20.0))
            f = recompose(lam, G)
            lam2, G2 = bl.decompose_reaction(f, lam=lam)
            assert lam2 == lam
            assert np.allclose(G2.coeffs, G.coeffs, atol=1e-12)
            lam3, G3 = bl.decompose_reaction(f)
            assert np.allclose(recompose(lam3, G3), f, atol=1e-12)

    def test_reaction_polynomial_carries_rate(self):
        F = bl.ReactionPolynomial((3.0, -6.0, 3.0), lam=6.0)
        lam, G = bl.decompose_reaction(F)
        assert lam == 6.0 and G.coeffs == (0.5, 0.0, 0.5)
