"""Stationary profiles of u_xx / 2 + lam * (G(u) - u) = 0 with u(0) = 0.

For the binary critical model (die or split in two, each with probability
one half) the bounded profile is known in closed form,

    u(x) = 1 - 1 / (sqrt(lam / 6) * x + 1)^2.

For general offspring polynomials the profile is found by shooting on the
unknown initial slope with bisection between undershooting and overshooting
trajectories. A Monte Carlo check confirms that a candidate stationary
profile dominates the simulated barrier-avoidance probability, i.e. that the
simulated probability is the least nonnegative profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import bbm
from .offspring import OffspringPolynomial, classify
from .pde import Field, Grid1D, residual

BINARY_CRITICAL = (0.5, 0.0, 0.5)

_OVERSHOOT_EPS = 1e-9
_DOWNTURN_EPS = 1e-9


class BracketFailure(RuntimeError):
    """No undershoot/overshoot bracket exists for the shooting slope."""


class ResidualTooLarge(ValueError):
    """Candidate profile is not a stationary solution; check refused."""

    def __init__(self, value: float, threshold: float):
        self.value = value
        self.threshold = threshold
        super().__init__(
            f"stationary residual {value:.3g} exceeds threshold {threshold:.3g}"
        )


@dataclass(frozen=True)
class ClosedForm:
    """The binary-model profile; a = sqrt(lam / 6) sets the length scale."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("rate must be positive")

    @property
    def a(self) -> float:
        return math.sqrt(self.lam / 6.0)

    def __call__(self, x):
        return closed_form(self.lam, x)


def closed_form(lam: float, x):
    """1 - 1 / (sqrt(lam / 6) x + 1)^2; accepts scalars or arrays, x >= 0."""
    if lam <= 0:
        raise ValueError("rate must be positive")
    a = math.sqrt(lam / 6.0)
    out = 1.0 - 1.0 / (a * np.asarray(x, dtype=np.float64) + 1.0) ** 2
    return float(out) if np.isscalar(x) else out


def _fd_stationary_residual(
    fn: Callable, lam: float, xs: np.ndarray, h: float
) -> float:
    """Max |centered-difference u_xx / 2 + lam (u - 1)^2 / 2| over xs."""
    xs = np.asarray(xs, dtype=np.float64)
    u0 = fn(xs)
    um = fn(xs - h)
    up = fn(xs + h)
    lap = (um - 2.0 * u0 + up) / h**2
    return float(np.max(np.abs(0.5 * lap + 0.5 * lam * (u0 - 1.0) ** 2)))


def verify_closed_form(lam: float, xs: Sequence[float], h: float) -> float:
    """Finite-difference residual of the closed form in the binary equation.

    Returns the max over the sample points; an exact solution gives O(h^2)
    plus rounding noise of order eps / h^2.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xs = np.asarray(xs, dtype=np.float64)
    if np.any(xs - h <= 0):
        raise ValueError("sample points must stay right of x = h")
    return _fd_stationary_residual(lambda x: closed_form(lam, x), lam, xs, h)


@dataclass
class ShootingResult:
    slope0: float
    profile: Field
    converged: bool
    target_value: float


_OVER = 1
_UNDER = -1
_NEITHER = 0


def _classify_slope(lam, G, L, slope, target, tol, rtol, dense=False):
    """Integrate from (0, slope) and label the trajectory.

    Overshoot: u exceeds the target. Undershoot: u turns decreasing while
    still well below the target. Trajectories that reach x = L still rising
    but short of the target are lumped with overshoots, which biases the
    bisection onto slopes that provably turn down; the surviving bracket
    still pins the separatrix because the undecided band is exponentially
    thin in L.
    """
    coeffs = G.coeffs

    def rhs(x, y):
        u = y[0]
        acc = 0.0
        for c in reversed(coeffs):
            acc = acc * u + c
        return (y[1], -2.0 * lam * (acc - u))

    def ev_over(x, y):
        return y[0] - (target + _OVERSHOOT_EPS)

    ev_over.terminal = True
    ev_over.direction = 1.0

    def ev_down(x, y):
        return y[1] + _DOWNTURN_EPS

    ev_down.terminal = True
    ev_down.direction = -1.0

    sol = solve_ivp(
        rhs,
        (0.0, L),
        (0.0, slope),
        method="RK45",
        rtol=rtol,
        atol=1e-12,
        events=(ev_over, ev_down),
        dense_output=dense,
    )
    if sol.t_events[0].size:
        return _OVER, sol
    if sol.t_events[1].size:
        u_at = sol.y_events[1][0][0]
        if u_at < target - tol:
            return _UNDER, sol
        return _OVER, sol
    return _NEITHER, sol


def shoot(
    lam: float,
    G: OffspringPolynomial,
    L: float,
    tol: float = 1e-4,
    target: float = 1.0,
    grid: Grid1D | None = None,
    rtol: float = 1e-10,
) -> ShootingResult:
    """Solve the stationary equation with u(0) = 0 by shooting on u'(0).

    Critical and subcritical models have a unique bounded profile rising to
    1, the default target. For supercritical models the far field of the
    bounded family is ambiguous, so pass the intended target explicitly (the
    extinction probability gives the least profile).

    Bisection tightens the slope bracket to machine precision (far inside
    ``tol``), because trajectory errors grow exponentially along the profile.
    Even so, in double precision the integrated trajectory must eventually
    peel off the separatrix; the returned profile is therefore truncated at
    the first terminal event and continued with the constant target, which
    by the bracketing argument bounds the true profile there. ``converged``
    requires the trajectory to have approached within 10 * tol of the target
    before any truncation, which fails when the domain is too short or no
    admissible profile exists. Raises BracketFailure when no
    undershoot/overshoot bracket can be found at all.
    """
    if lam <= 0 or L <= 0 or tol <= 0:
        raise ValueError("lam, L and tol must be positive")
    if not 0.0 < target <= 1.0:
        raise ValueError("target must lie in (0, 1]")

    lab = _classify_slope(lam, G, L, 0.0, target, tol, rtol)[0]
    if lab is not _UNDER:
        raise BracketFailure(
            "slope 0 does not undershoot; no admissible rising profile "
            "(zero reaction at u = 0?)"
        )
    lo = 0.0
    hi = 10.0 * math.sqrt(lam)
    cap = 2.0**20 * math.sqrt(lam)
    while True:
        lab = _classify_slope(lam, G, L, hi, target, tol, rtol)[0]
        if lab is _OVER:
            break
        if hi > cap:
            raise BracketFailure(f"no overshoot found for slopes up to {cap:.3g}")
        lo = hi
        hi *= 2.0

    width_goal = 1e-13 * max(1.0, hi)
    for _ in range(80):
        if hi - lo <= width_goal:
            break
        mid = 0.5 * (lo + hi)
        lab = _classify_slope(lam, G, L, mid, target, tol, rtol)[0]
        if lab is _UNDER:
            lo = mid
        else:
            hi = mid
    slope0 = 0.5 * (lo + hi)

    if grid is None:
        grid = Grid1D.from_dx(L, max(L / 4000.0, 1e-4))
    _, sol = _classify_slope(lam, G, L, slope0, target, tol, rtol, dense=True)
    x_stop = sol.t[-1]
    u_stop = sol.y[0][-1]
    xs = grid.xs()
    values = np.full(xs.shape, target)
    inside = xs <= x_stop
    values[inside] = sol.sol(xs[inside])[0]
    profile = Field(grid, values)
    converged = bool(abs(u_stop - target) < 10.0 * tol)
    return ShootingResult(slope0, profile, converged, target)


@dataclass
class PointCheck:
    x: float
    lower: bbm.EstimateWithCI
    upper: bbm.EstimateWithCI
    candidate_value: float
    margin: float
    ok: bool


@dataclass
class LeastSolutionReport:
    residual: float
    points: list[PointCheck]

    @property
    def passed(self) -> bool:
        return all(p.ok for p in self.points)


def least_solution_check(
    candidate: Field,
    lam: float,
    G: OffspringPolynomial,
    mc: bbm.SimConfig,
    xs: Sequence[float] = (0.5, 1.0, 2.0, 4.0),
    n_reps: int = 20_000,
    threads: int | None = None,
    residual_tol: float = 1e-2,
) -> LeastSolutionReport:
    """Check that a stationary profile dominates the simulated probability.

    First confirms the candidate really is a stationary solution (discrete
    residual below ``residual_tol``, else ResidualTooLarge). Then, for each
    sample point, estimates the barrier-avoidance probability by simulation
    and requires its statistically sound lower bound not to exceed the
    candidate: lower_mean <= candidate(x) + 3 sigma. The simulation model is
    rebuilt from (lam, G) at each x; ``mc`` supplies dt, horizon, caps, seed
    and bridge settings.
    """
    res = residual(candidate, lam, G)
    if res > residual_tol:
        raise ResidualTooLarge(res, residual_tol)
    points = []
    for x in xs:
        model = bbm.ModelSpec(lam=lam, offspring=G, start_x=float(x))
        config = bbm.SimConfig(
            model=model,
            dt=mc.dt,
            horizon_T=mc.horizon_T,
            max_particles=mc.max_particles,
            max_events=mc.max_events,
            seed=mc.seed,
            bridge_correction=mc.bridge_correction,
        )
        lower, upper = bbm.estimate_p(config, n_reps, threads=threads)
        cand = candidate.at(float(x))
        margin = cand + 3.0 * lower.sigma - lower.mean
        points.append(PointCheck(float(x), lower, upper, cand, margin, margin >= 0.0))
    return LeastSolutionReport(res, points)
