"""Finite-difference evolution of u_t = u_xx / 2 + lam * (G(u) - u) on [0, L].

The left boundary is held at 0. The right boundary is either a Dirichlet
value (natural for no-hit-probability runs, whose far field is 1) or a zero
Neumann condition (natural for extinct-and-no-hit runs, whose far-field
transient is unknown). Steady states of both schemes satisfy the same
discrete stationary equation, so scheme choice affects only the transient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from scipy.linalg import solve_banded

from .offspring import OffspringPolynomial

INSTABILITY_LIMIT = 10.0

RightBC = Union[float, str]  # a Dirichlet value, or "neumann" for zero flux

EXPLICIT = "explicit"
CRANK_NICOLSON = "cn"


class Instability(RuntimeError):
    """Solution left the trusted range; the time step is too large."""

    def __init__(self, t: float, worst: float):
        self.t = t
        self.worst = worst
        super().__init__(f"|u| reached {worst:.3g} at t = {t:.6g} (limit {INSTABILITY_LIMIT})")


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [0, L] with nx interior nodes; dx = L / (nx + 1)."""

    L: float
    nx: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("domain length must be positive")
        if self.nx < 3:
            raise ValueError("need at least 3 interior points")

    @property
    def dx(self) -> float:
        return self.L / (self.nx + 1)

    def xs(self) -> np.ndarray:
        """Node positions including both boundary nodes."""
        return np.linspace(0.0, self.L, self.nx + 2)

    @classmethod
    def from_dx(cls, L: float, dx: float) -> "Grid1D":
        return cls(L, max(3, int(round(L / dx)) - 1))


@dataclass
class Field:
    """Real profile on a grid, boundary nodes included (length nx + 2)."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.nx + 2,):
            raise ValueError(
                f"expected {self.grid.nx + 2} values, got {self.values.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def at(self, x) -> float:
        """Linear interpolation between grid nodes."""
        out = np.interp(x, self.grid.xs(), self.values)
        return float(out) if np.isscalar(x) else out

    def check_probability_range(self, tol: float = 1e-9) -> None:
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < -tol or hi > 1.0 + tol:
            raise ValueError(f"values outside [0, 1]: min {lo}, max {hi}")

    @classmethod
    def full(cls, grid: Grid1D, value: float) -> "Field":
        return cls(grid, np.full(grid.nx + 2, float(value)))

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable) -> "Field":
        return cls(grid, np.asarray(fn(grid.xs()), dtype=np.float64))


@dataclass(frozen=True)
class EvolveSpec:
    """Everything but the grid needed to advance the equation in time.

    ic is "zero", "one", or a Field. scheme "explicit" needs dt <= dx^2;
    "cn" treats diffusion by Crank-Nicolson and the reaction explicitly,
    so it is stable at much larger dt (the reaction still wants
    dt < 2 / (lam * max(1, G'(1)))).
    """

    lam: float
    offspring: OffspringPolynomial
    ic: Union[str, Field] = "zero"
    right_bc: RightBC = "neumann"
    dt: float = 1e-3
    scheme: str = EXPLICIT

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("rate must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if isinstance(self.ic, str) and self.ic not in ("zero", "one"):
            raise ValueError("ic must be 'zero', 'one', or a Field")
        if isinstance(self.right_bc, str) and self.right_bc != "neumann":
            raise ValueError("right_bc must be a number or 'neumann'")
        if self.scheme not in (EXPLICIT, CRANK_NICOLSON):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @classmethod
    def r_type(cls, lam: float, offspring: OffspringPolynomial, **kw) -> "EvolveSpec":
        """Zero initial condition with a free right end."""
        return cls(lam, offspring, ic="zero", right_bc="neumann", **kw)

    @classmethod
    def s_type(cls, lam: float, offspring: OffspringPolynomial, **kw) -> "EvolveSpec":
        """All-ones initial condition pinned to 1 at the right end."""
        return cls(lam, offspring, ic="one", right_bc=1.0, **kw)


@dataclass
class SteadyState:
    field: Field
    converged: bool
    t_reached: float


def default_domain_length(lam: float) -> float:
    """Truncation length at which the explicit profile is within ~1e-3 of 1."""
    return 40.0 / math.sqrt(lam / 6.0)


def stable_dt_bound(grid: Grid1D, lam: float, G: OffspringPolynomial) -> float:
    """Largest explicit step that keeps probability-valued solutions in [0, 1]."""
    m = max(1.0, sum(n * a for n, a in enumerate(G.coeffs)))
    return 1.0 / (1.0 / grid.dx**2 + lam * m)


def initial_field(spec: EvolveSpec, grid: Grid1D) -> Field:
    if isinstance(spec.ic, Field):
        if spec.ic.grid != grid:
            raise ValueError("custom initial condition lives on a different grid")
        u = spec.ic.copy()
    elif spec.ic == "zero":
        u = Field.full(grid, 0.0)
    else:
        u = Field.full(grid, 1.0)
    _apply_bcs(u.values, spec)
    return u


def _apply_bcs(values: np.ndarray, spec: EvolveSpec) -> None:
    values[0] = 0.0
    if spec.right_bc == "neumann":
        values[-1] = values[-2]
    else:
        values[-1] = float(spec.right_bc)


def _reaction(spec: EvolveSpec, u: np.ndarray) -> np.ndarray:
    g = np.polynomial.polynomial.polyval(u, spec.offspring.coeffs)
    return spec.lam * (g - u)


def _check_stable(values: np.ndarray, t: float) -> None:
    worst = float(np.max(np.abs(values)))
    # NaN fails the <= comparison and lands here too.
    if not worst <= INSTABILITY_LIMIT:
        raise Instability(t, worst)


class _Stepper:
    """Precomputed update for repeated steps on a fixed grid and dt."""

    def __init__(self, spec: EvolveSpec, grid: Grid1D, dt: float | None = None):
        self.spec = spec
        self.grid = grid
        self.dt = spec.dt if dt is None else dt
        self.dx2 = grid.dx**2
        if spec.scheme == EXPLICIT and self.dt > self.dx2 * (1 + 1e-12):
            raise ValueError(
                f"explicit scheme needs dt <= dx^2 = {self.dx2:.3g}, got {self.dt:.3g}"
            )
        if spec.scheme == CRANK_NICOLSON:
            r = self.dt / (4.0 * self.dx2)
            nx = grid.nx
            ab = np.zeros((3, nx))
            ab[0, 1:] = -r
            ab[1, :] = 1.0 + 2.0 * r
            ab[2, :-1] = -r
            if spec.right_bc == "neumann":
                ab[1, -1] = 1.0 + r
            self._ab = ab
            self._r = r

    def advance(self, values: np.ndarray) -> np.ndarray:
        spec = self.spec
        dt = self.dt
        u = values
        lap = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / self.dx2
        rea = _reaction(spec, u[1:-1])
        out = np.empty_like(u)
        if spec.scheme == EXPLICIT:
            out[1:-1] = u[1:-1] + dt * (0.5 * lap + rea)
        else:
            r = self._r
            rhs = u[1:-1] + (dt / 2.0) * 0.5 * lap + dt * rea
            # boundary values are constant in time, so their contribution at
            # the new time level mirrors the current one
            rhs[0] += r * u[0]
            if spec.right_bc != "neumann":
                rhs[-1] += r * u[-1]
            out[1:-1] = solve_banded((1, 1), self._ab, rhs)
        _apply_bcs(out, spec)
        return out


def step(u: Field, spec: EvolveSpec) -> Field:
    """Advance one time step of length spec.dt and return a new Field."""
    stepper = _Stepper(spec, u.grid)
    new = stepper.advance(u.values)
    _check_stable(new, spec.dt)
    return Field(u.grid, new)


def evolve(spec: EvolveSpec, grid: Grid1D, T: float) -> Field:
    """Run from the spec's initial condition to time T."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    u = initial_field(spec, grid)
    if T == 0:
        return u
    stepper = _Stepper(spec, grid)
    values, t = _run(stepper, u.values, T, spec, grid, t0=0.0)
    return Field(grid, values)


def _run(stepper, values, T, spec, grid, t0):
    """Advance to t0 + T, shortening the final step to land exactly on it."""
    t = t0
    target = t0 + T
    n_full = int(math.floor(T / stepper.dt + 1e-12))
    for _ in range(n_full):
        values = stepper.advance(values)
        t += stepper.dt
        _check_stable(values, t)
    rem = target - t
    if rem > 1e-12 * max(1.0, stepper.dt):
        tail = _Stepper(spec, grid, dt=rem)
        values = tail.advance(values)
        t = target
        _check_stable(values, t)
    return values, t


def steady_state(
    spec: EvolveSpec,
    grid: Grid1D,
    tol: float = 1e-8,
    t_max: float = 10_000.0,
) -> SteadyState:
    """Evolve until the profile stops moving: ||u(t + 1) - u(t)||_inf < tol.

    The rate of change is measured over windows of one time unit. Returns the
    final field, whether the tolerance was met, and the time reached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    window = 1.0
    u = initial_field(spec, grid)
    stepper = _Stepper(spec, grid)
    values = u.values
    t = 0.0
    # the guard absorbs float drift from per-step time accumulation
    while t_max - t > 1e-9 * max(1.0, t_max):
        prev = values.copy()
        span = min(window, t_max - t)
        values, t = _run(stepper, values, span, spec, grid, t0=t)
        rate = float(np.max(np.abs(values - prev))) / span
        if rate < tol:
            return SteadyState(Field(grid, values), True, t)
    return SteadyState(Field(grid, values), False, t)


def residual(u: Field, lam: float, G: OffspringPolynomial) -> float:
    """Sup norm of u_xx / 2 + lam * (G(u) - u) over interior nodes."""
    v = u.values
    dx2 = u.grid.dx**2
    lap = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / dx2
    g = np.polynomial.polynomial.polyval(v[1:-1], G.coeffs)
    return float(np.max(np.abs(0.5 * lap + lam * (g - v[1:-1]))))
