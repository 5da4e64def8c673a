import math

import numpy as np
import pytest

import bbmlab as bl
from bbmlab.stationary import _fd_stationary_residual

BINARY = bl.validate([0.5, 0, 0.5])
SUB = bl.validate([0.75, 0, 0.25])
SUP = bl.validate([0.25, 0, 0.75])


class TestClosedForm:
    def test_boundary_value(self):
        assert bl.closed_form(6.0, 0.0) == 0.0

    def test_reference_points(self):
        assert bl.closed_form(6.0, 1.0) == pytest.approx(0.75)
        assert bl.closed_form(24.0, 0.5) == pytest.approx(0.75)

    def test_length_scale(self):
        cf = bl.ClosedForm(24.0)
        assert cf.a**2 == pytest.approx(24.0 / 6.0)
        assert cf(0.5) == pytest.approx(0.75)

    def test_strictly_increasing_into_unit_interval(self):
        xs = np.linspace(0.0, 50.0, 2000)
        vals = bl.closed_form(6.0, xs)
        assert np.all(np.diff(vals) > 0)
        assert np.all(vals < 1.0)
        assert bl.closed_form(6.0, 1e6) > 1.0 - 1e-11

    def test_scaling_relation(self):
        xs = np.linspace(0.0, 10.0, 101)
        for lam in (0.5, 2.0, 6.0, 24.0):
            left = bl.closed_form(lam, xs)
            right = bl.closed_form(1.0, xs * math.sqrt(lam))
            assert np.allclose(left, right, rtol=1e-13, atol=1e-14)


class TestVerifyClosedForm:
    def test_small_residual_across_rates(self):
        xs = np.linspace(0.1, 10.0, 500)
        for lam in (1.0, 6.0, 24.0):
            assert bl.verify_closed_form(lam, xs, 1e-4) <= 1e-6

    def test_wrong_candidate_rejected(self):
        # negative control for the harness: 1 - 1/(x+1) is not a solution
        xs = np.linspace(0.1, 10.0, 500)
        wrong = lambda x: 1.0 - 1.0 / (np.asarray(x) + 1.0)
        assert _fd_stationary_residual(wrong, 6.0, xs, 1e-4) >= 0.1

    def test_second_order_in_h(self):
        xs = np.linspace(0.1, 10.0, 200)
        r_coarse = bl.verify_closed_form(6.0, xs, 1e-2)
        r_fine = bl.verify_closed_form(6.0, xs, 1e-3)
        assert 60.0 < r_coarse / r_fine < 160.0
        assert bl.verify_closed_form(6.0, xs, 1e-4) <= 1e-6

    def test_rejects_points_too_close_to_origin(self):
        with pytest.raises(ValueError):
            bl.verify_closed_form(6.0, [0.05], 0.1)


class TestShoot:
    def test_binary_critical(self):
        res = bl.shoot(6.0, BINARY, 40.0, tol=1e-4)
        assert res.converged
        assert res.slope0 == pytest.approx(2.0, abs=1e-4)
        xs = res.profile.grid.xs()
        win = xs <= 10.0
        err = np.max(np.abs(res.profile.values[win] - bl.closed_form(6.0, xs[win])))
        assert err < 1e-4
        assert abs(res.profile.values[-1] - 1.0) < 10 * 1e-4

    def test_subcritical(self):
        res = bl.shoot(6.0, SUB, 40.0, tol=1e-4)
        assert res.converged
        # conserved-quantity prediction: u'(0) = 2 sqrt(lam * int_0^1 (G - u))
        assert res.slope0 == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-6)
        assert np.all(np.diff(res.profile.values) >= -1e-9)
        assert abs(res.profile.values[-1] - 1.0) < 1e-3

    def test_subcritical_matches_pde_steady_state(self):
        res = bl.shoot(6.0, SUB, 10.0, tol=1e-4)
        grid = bl.Grid1D.from_dx(10.0, 0.02)
        ss = bl.steady_state(bl.EvolveSpec.r_type(6.0, SUB, dt=0.01, scheme="cn"),
                             grid, tol=1e-9, t_max=200)
        assert ss.converged
        diff = np.max(np.abs(res.profile.at(grid.xs()) - ss.field.values))
        assert diff < 1e-3

    def test_supercritical_with_extinction_target(self):
        qstar = bl.extinction_probability(SUP)
        res = bl.shoot(6.0, SUP, 40.0, tol=1e-4, target=qstar)
        assert res.converged
        assert res.slope0 == pytest.approx(2.0 * math.sqrt(2.0) / 3.0, abs=1e-6)
        assert res.profile.values[-1] == pytest.approx(qstar, abs=1e-6)

    def test_supercritical_matches_pde_r_steady(self):
        qstar = bl.extinction_probability(SUP)
        res = bl.shoot(6.0, SUP, 40.0, tol=1e-4, target=qstar)
        grid = bl.Grid1D.from_dx(40.0, 0.02)
        ss = bl.steady_state(bl.EvolveSpec.r_type(6.0, SUP, dt=0.02, scheme="cn"),
                             grid, tol=1e-8, t_max=2000)
        xs = grid.xs()
        win = xs <= 20.0
        diff = np.max(np.abs(res.profile.at(xs[win]) - ss.field.values[win]))
        assert diff < 1e-3

    def test_supercritical_far_field_one_unreachable(self):
        res = bl.shoot(6.0, SUP, 40.0, tol=1e-4, target=1.0)
        assert not res.converged

    def test_zero_reaction_has_no_bracket(self):
        with pytest.raises(bl.BracketFailure):
            bl.shoot(6.0, bl.validate([0.0, 1.0]), 40.0)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            bl.shoot(-1.0, BINARY, 40.0)
        with pytest.raises(ValueError):
            bl.shoot(6.0, BINARY, 40.0, target=1.5)


class TestLeastSolutionCheck:
    def _mc(self, seed=17):
        model = bl.ModelSpec(lam=6.0, offspring=BINARY, start_x=1.0)
        return bl.SimConfig(model=model, dt=1e-3, horizon_T=25.0, seed=seed)

    def test_closed_form_candidate_passes(self):
        grid = bl.Grid1D.from_dx(40.0, 0.02)
        candidate = bl.Field.from_function(grid, lambda x: bl.closed_form(6.0, x))
        report = bl.least_solution_check(
            candidate, 6.0, BINARY, self._mc(), xs=(0.5, 1.0, 2.0),
            n_reps=3000, threads=1,
        )
        assert report.passed
        assert len(report.points) == 3

    def test_all_ones_candidate_passes_strictly(self):
        grid = bl.Grid1D.from_dx(40.0, 0.02)
        candidate = bl.Field.full(grid, 1.0)
        report = bl.least_solution_check(
            candidate, 6.0, BINARY, self._mc(), xs=(0.5, 1.0),
            n_reps=2000, threads=1,
        )
        assert report.passed
        assert all(p.margin > 0.1 for p in report.points)

    def test_zero_candidate_rejected(self):
        grid = bl.Grid1D.from_dx(40.0, 0.02)
        candidate = bl.Field.full(grid, 0.0)
        with pytest.raises(bl.ResidualTooLarge):
            bl.least_solution_check(candidate, 6.0, BINARY, self._mc())
