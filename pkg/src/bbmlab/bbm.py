"""Event-driven Monte Carlo for branching Brownian motion with a barrier at 0.

A single ancestor starts at ``start_x`` and every particle diffuses until an
exponential lifetime ends, then leaves a random number of children at its
death position. The replicate is classified by whether any particle ever
touched the barrier, whether the population died out first, or whether it
was still alive (never having touched) at the time horizon.

Estimators:
  estimate_r  extinct with no hit by time t (lower bound on avoidance)
  estimate_s  no hit by time t (upper bound on avoidance)
  estimate_p  the (r, s) sandwich at the horizon
  estimate_q  mean product of f over the stopped process at time t, where
              particles touching the barrier freeze there forever

Replicates are embarrassingly parallel; results are bitwise reproducible
for a given (config, seed) regardless of the number of worker threads,
because replicate i draws from its own counter-derived random stream.
"""
from __future__ import annotations

import enum
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels as _k
from .offspring import OffspringPolynomial

DEFAULT_MAX_PARTICLES = 10**6
DEFAULT_MAX_EVENTS = 10**8
CAP_POLLUTION_THRESHOLD = 0.01
Z95 = 1.96


class CapPollutionWarning(UserWarning):
    """More than 1% of replicates ended by hitting a resource cap."""

    def __init__(self, fraction: float):
        self.fraction = fraction
        super().__init__(f"{fraction:.2%} of replicates hit a cap; bounds are widened")


class Tag(enum.Enum):
    HitBarrier = "HitBarrier"
    ExtinctNoHit = "ExtinctNoHit"
    AliveAtHorizonNoHit = "AliveAtHorizonNoHit"
    CapExceeded = "CapExceeded"


_TAG_BY_STATUS = {
    _k.STATUS_HIT: Tag.HitBarrier,
    _k.STATUS_EXTINCT: Tag.ExtinctNoHit,
    _k.STATUS_ALIVE: Tag.AliveAtHorizonNoHit,
    _k.STATUS_CAPPED: Tag.CapExceeded,
}


@dataclass(frozen=True)
class ModelSpec:
    """Branching rate, offspring law, and the ancestor's distance to the barrier."""

    lam: float
    offspring: OffspringPolynomial
    start_x: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("branching rate must be positive")
        if self.start_x <= 0:
            raise ValueError("start position must be positive")


@dataclass(frozen=True)
class SimConfig:
    """Full parameterization of one replicate.

    ``horizon_T`` may be ``math.inf``; replicates then run until a hit,
    extinction, or a cap. The Brownian-bridge correction accounts for
    barrier crossings between successive sampled path points and removes the
    O(sqrt(dt)) detection bias of endpoint checking.
    """

    model: ModelSpec
    dt: float = 1e-3
    horizon_T: float = math.inf
    max_particles: int = DEFAULT_MAX_PARTICLES
    max_events: int = DEFAULT_MAX_EVENTS
    seed: int = 0
    bridge_correction: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.horizon_T > 0:
            raise ValueError("horizon must be positive (math.inf for unbounded)")
        if self.max_particles < 1 or self.max_events < 1:
            raise ValueError("caps must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SimOutcome:
    tag: Tag
    elapsed: float
    peak_population: int


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with replicate count and 95% half-width."""

    mean: float
    n: int
    half_width_95: float

    @property
    def sigma(self) -> float:
        return self.half_width_95 / Z95

    @classmethod
    def from_bernoulli(cls, successes: int, n: int) -> "EstimateWithCI":
        p = successes / n
        return cls(p, n, Z95 * math.sqrt(p * (1.0 - p) / n))

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "EstimateWithCI":
        values = np.asarray(values, dtype=np.float64)
        n = values.size
        mean = float(values.mean())
        hw = Z95 * float(values.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        return cls(mean, n, hw)


def seed_for_replicate(seed: int, index: int) -> int:
    """Python twin of the kernel's per-replicate stream key (for inspection)."""
    mask = (1 << 64) - 1
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


@dataclass
class ReplicateBatch:
    """Per-replicate classification arrays for one simulation run."""

    config: SimConfig
    n: int
    status: np.ndarray
    first_hit: np.ndarray
    end_time: np.ndarray
    peak: np.ndarray
    events: np.ndarray

    def tag_counts(self) -> dict[str, int]:
        return {
            tag.value: int(np.count_nonzero(self.status == code))
            for code, tag in _TAG_BY_STATUS.items()
        }

    def capped_fraction(self) -> float:
        return float(np.count_nonzero(self.status == _k.STATUS_CAPPED)) / self.n

    def outcome(self, i: int) -> SimOutcome:
        return SimOutcome(
            _TAG_BY_STATUS[int(self.status[i])],
            float(self.end_time[i]),
            int(self.peak[i]),
        )

    def r_hat(self, t: float) -> EstimateWithCI:
        """Fraction extinct by t with no hit; capped replicates count against."""
        hits = np.count_nonzero(
            (self.status == _k.STATUS_EXTINCT) & (self.end_time <= t)
        )
        return EstimateWithCI.from_bernoulli(int(hits), self.n)

    def s_hat(self, t: float) -> EstimateWithCI:
        """Fraction with no recorded hit by t; capped-unknowns count as no-hit."""
        no_hit = np.count_nonzero(~(self.first_hit <= t))
        return EstimateWithCI.from_bernoulli(int(no_hit), self.n)


def _model_args(config: SimConfig):
    return (
        float(config.model.start_x),
        float(config.model.lam),
        config.model.offspring.cumulative(),
        float(config.horizon_T),
        float(config.dt),
        bool(config.bridge_correction),
        int(config.max_particles),
        int(config.max_events),
    )


def _chunk_ranges(n: int, threads: int):
    chunk = max(64, min(8192, -(-n // (threads * 16))))
    return [(i, min(chunk, n - i)) for i in range(0, n, chunk)]


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        return min(8, os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def run_replicates(
    config: SimConfig, n_reps: int, threads: int | None = None
) -> ReplicateBatch:
    """Simulate n_reps independent replicates and return their classifications."""
    if n_reps < 1:
        raise ValueError("need at least one replicate")
    threads = _resolve_threads(threads)
    status = np.empty(n_reps, np.int64)
    first_hit = np.empty(n_reps, np.float64)
    end_time = np.empty(n_reps, np.float64)
    peak = np.empty(n_reps, np.int64)
    events = np.empty(n_reps, np.int64)
    seed = np.uint64(config.seed)
    args = _model_args(config)

    def work(span):
        off, count = span
        _k.chunk_pr(
            seed, off, count, *args,
            status, first_hit, end_time, peak, events, off,
        )

    spans = _chunk_ranges(n_reps, threads)
    if threads == 1 or len(spans) == 1:
        for span in spans:
            work(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))
    return ReplicateBatch(config, n_reps, status, first_hit, end_time, peak, events)


def simulate_replicate(config: SimConfig, replicate_index: int = 0) -> SimOutcome:
    """Run a single replicate; index selects its random stream."""
    status = np.empty(1, np.int64)
    first_hit = np.empty(1, np.float64)
    end_time = np.empty(1, np.float64)
    peak = np.empty(1, np.int64)
    events = np.empty(1, np.int64)
    _k.chunk_pr(
        np.uint64(config.seed), replicate_index, 1, *_model_args(config),
        status, first_hit, end_time, peak, events, 0,
    )
    return SimOutcome(
        _TAG_BY_STATUS[int(status[0])], float(end_time[0]), int(peak[0])
    )


def _warn_pollution(capped_fraction: float) -> None:
    if capped_fraction > CAP_POLLUTION_THRESHOLD:
        warnings.warn(CapPollutionWarning(capped_fraction), stacklevel=3)


def estimate_r(
    config: SimConfig, t: float, n_reps: int, threads: int | None = None
) -> EstimateWithCI:
    """Probability of extinction with no barrier hit by time t."""
    if t > config.horizon_T:
        raise ValueError("query time exceeds the horizon")
    batch = run_replicates(config, n_reps, threads)
    _warn_pollution(batch.capped_fraction())
    return batch.r_hat(t)


def estimate_s(
    config: SimConfig, t: float, n_reps: int, threads: int | None = None
) -> EstimateWithCI:
    """Probability of no barrier hit by time t."""
    if t > config.horizon_T:
        raise ValueError("query time exceeds the horizon")
    batch = run_replicates(config, n_reps, threads)
    _warn_pollution(batch.capped_fraction())
    return batch.s_hat(t)


def estimate_p(
    config: SimConfig, n_reps: int, threads: int | None = None
) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Sandwich (lower, upper) for the barrier-avoidance probability.

    The lower bound counts replicates known extinct with no hit by the
    horizon, the upper counts replicates with no recorded hit. Capped
    replicates widen the pair outward rather than being dropped.
    """
    if not math.isfinite(config.horizon_T):
        raise ValueError("estimate_p needs a finite horizon")
    batch = run_replicates(config, n_reps, threads)
    _warn_pollution(batch.capped_fraction())
    return batch.r_hat(config.horizon_T), batch.s_hat(config.horizon_T)


def estimate_q(
    config: SimConfig,
    f: Callable,
    t: float,
    n_reps: int,
    threads: int | None = None,
    stride: int = 256,
) -> EstimateWithCI:
    """Mean of prod_{y in Z(t)} f(y) over the stopped process.

    Z(t) is the same branching diffusion except that particles touching the
    barrier stop there forever; frozen particles contribute f(0). The empty
    product is 1. ``f`` must map numpy arrays of positions into [0, 1].
    Capped replicates are excluded from the average (and counted toward the
    pollution warning); everything else is deterministic in (config, seed).
    """
    if t > config.horizon_T:
        raise ValueError("query time exceeds the horizon")
    if n_reps < 1:
        raise ValueError("need at least one replicate")
    threads = _resolve_threads(threads)
    status = np.empty(n_reps, np.int64)
    alive = np.empty(n_reps, np.int64)
    frozen = np.empty(n_reps, np.int64)
    peak = np.empty(n_reps, np.int64)
    events = np.empty(n_reps, np.int64)
    seed = np.uint64(config.seed)
    start_x, lam, cum, _, dt, bridge, maxp, maxe = _model_args(config)

    products = np.empty(n_reps, np.float64)
    f0 = float(np.asarray(f(np.array([0.0]))).reshape(-1)[0])
    if not -1e-9 <= f0 <= 1.0 + 1e-9:
        raise ValueError("f must take values in [0, 1]")

    def work(span):
        off, count = span
        sl = slice(off, off + count)
        pos = np.empty((count, stride), np.float64)
        _k.chunk_q(
            seed, off, count, start_x, lam, cum, float(t), dt, bridge,
            maxp, maxe,
            status[sl], alive[sl], frozen[sl], peak[sl], events[sl], pos, 0,
        )
        for j in range(count):
            i = off + j
            st = status[i]
            if st == _k.STATUS_CAPPED:
                products[i] = np.nan
                continue
            if st == _k.STATUS_OVERFLOW:
                row = np.empty((1, int(alive[i])), np.float64)
                _k.chunk_q(
                    seed, i, 1, start_x, lam, cum, float(t), dt, bridge,
                    maxp, maxe,
                    status[i : i + 1], alive[i : i + 1], frozen[i : i + 1],
                    peak[i : i + 1], events[i : i + 1], row, 0,
                )
                vals = row[0]
            else:
                vals = pos[j, : int(alive[i])]
            prod = 1.0
            if vals.size:
                fv = np.asarray(f(vals), dtype=np.float64)
                if fv.min() < -1e-9 or fv.max() > 1.0 + 1e-9:
                    raise ValueError("f must take values in [0, 1]")
                prod = float(np.prod(fv))
            if frozen[i]:
                prod *= f0 ** int(frozen[i])
            products[i] = prod

    spans = _chunk_ranges(n_reps, threads)
    if threads == 1 or len(spans) == 1:
        for span in spans:
            work(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))

    valid = products[~np.isnan(products)]
    capped_fraction = 1.0 - valid.size / n_reps
    _warn_pollution(capped_fraction)
    if valid.size == 0:
        raise RuntimeError("every replicate hit a cap; nothing to average")
    return EstimateWithCI.from_samples(valid)
