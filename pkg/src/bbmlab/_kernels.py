"""Numba kernels for the branching-diffusion Monte Carlo engine.

Randomness is counter-based at the replicate level: replicate i of a run
seeded with s draws from an xoshiro256++ stream keyed by mix64(s + (i+1) *
golden), so results depend only on (s, i), never on scheduling. Within a
replicate, particles are processed in birth order via a binary heap, which
makes the instantaneous population (and its peak) exact and lets a found
barrier hit prune everything born after it.

Status codes: 0 hit, 1 extinct without hit, 2 alive at the horizon without
hit, 3 capped, 4 snapshot buffer overflow (q runs only; resolved by rerun).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1CE4E5B9)
MIX2 = U64(0x94D049BB133111EB)
INV53 = 1.0 / 9007199254740992.0

STATUS_HIT = 0
STATUS_EXTINCT = 1
STATUS_ALIVE = 2
STATUS_CAPPED = 3
STATUS_OVERFLOW = 4

# bridge crossing probabilities below exp(-50) ~ 2e-22 are skipped
_BRIDGE_SKIP = 50.0


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> U64(30))) * MIX1
    z = (z ^ (z >> U64(27))) * MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, nogil=True)
def stream_seed(seed, index):
    return mix64(U64(seed) + (U64(index) + U64(1)) * GOLDEN)


@njit(cache=True, nogil=True)
def rng_init(st, seed, index):
    x = stream_seed(seed, index)
    for k in range(4):
        x = x + GOLDEN
        st[k] = mix64(x)
    if (st[0] | st[1] | st[2] | st[3]) == U64(0):
        st[0] = U64(1)


@njit(cache=True, nogil=True)
def rng_next(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    tmp = s0 + s3
    result = ((tmp << U64(23)) | (tmp >> U64(41))) + s0
    t = s1 << U64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = ((s3 << U64(45)) | (s3 >> U64(19)))
    return result


@njit(cache=True, nogil=True)
def rng_u01(st):
    return float(rng_next(st) >> U64(11)) * INV53


@njit(cache=True, nogil=True)
def rng_normal(st, sp):
    if sp[0] != 0.0:
        sp[0] = 0.0
        return sp[1]
    while True:
        a = 2.0 * rng_u01(st) - 1.0
        b = 2.0 * rng_u01(st) - 1.0
        s = a * a + b * b
        if 0.0 < s < 1.0:
            m = math.sqrt(-2.0 * math.log(s) / s)
            sp[0] = 1.0
            sp[1] = b * m
            return a * m


@njit(cache=True, nogil=True)
def sample_offspring(st, cum):
    u = rng_u01(st)
    for k in range(cum.shape[0]):
        if u < cum[k]:
            return k
    return cum.shape[0] - 1


@njit(cache=True, nogil=True)
def _grow(a):
    b = np.empty(a.shape[0] * 2, a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True, nogil=True)
def _heap_push(keys, vals, n, k, v):
    i = n
    keys[i] = k
    vals[i] = v
    while i > 0:
        p = (i - 1) >> 1
        if keys[p] <= keys[i]:
            break
        keys[p], keys[i] = keys[i], keys[p]
        vals[p], vals[i] = vals[i], vals[p]
        i = p
    return n + 1


@njit(cache=True, nogil=True)
def _heap_pop(keys, vals, n):
    k = keys[0]
    v = vals[0]
    n -= 1
    keys[0] = keys[n]
    vals[0] = vals[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        c = left
        right = left + 1
        if right < n and keys[right] < keys[left]:
            c = right
        if keys[c] >= keys[i]:
            break
        keys[c], keys[i] = keys[i], keys[c]
        vals[c], vals[i] = vals[i], vals[c]
        i = c
    return k, v, n


@njit(cache=True, nogil=True)
def replicate_pr(seed, index, start_x, lam, cum, horizon, dt, bridge,
                 max_particles, max_events):
    """One replicate for hit/extinction classification.

    Returns (status, first_hit, end_time, peak_population, events), where
    first_hit is the earliest barrier-hit time over the whole tree (inf if
    none) and end_time is the extinction time, the horizon, or the frontier
    time at which a cap fired.
    """
    st = np.empty(4, np.uint64)
    sp = np.zeros(2, np.float64)
    rng_init(st, seed, index)

    bk = np.empty(64, np.float64)
    bx = np.empty(64, np.float64)
    nb = 0
    dk = np.empty(64, np.float64)
    dv = np.empty(64, np.float64)
    nd = 0
    nb = _heap_push(bk, bx, nb, 0.0, start_x)

    min_hit = np.inf
    last_death = 0.0
    alive = 0
    peak = 0
    events = 0
    frontier = 0.0
    any_alive_horizon = False
    capped = False
    sqrt_dt = math.sqrt(dt)

    while nb > 0:
        b, x, nb = _heap_pop(bk, bx, nb)
        if b >= min_hit:
            break
        while nd > 0 and dk[0] <= b:
            _, _, nd = _heap_pop(dk, dv, nd)
            alive -= 1
        alive += 1
        if alive > peak:
            peak = alive
        frontier = b
        if alive > max_particles:
            capped = True
            break

        lifetime = -math.log(1.0 - rng_u01(st)) / lam
        death = b + lifetime
        t_end = death
        if horizon < t_end:
            t_end = horizon
        if min_hit < t_end:
            t_end = min_hit

        w = x
        t = b
        hit_time = -1.0
        while t_end - t > 1e-12 * dt:
            rem = t_end - t
            if rem > dt:
                h = dt
                sh = sqrt_dt
            else:
                h = rem
                sh = math.sqrt(rem)
            events += 1
            if events > max_events:
                capped = True
                frontier = t
                break
            w1 = w + sh * rng_normal(st, sp)
            t += h
            if w1 <= 0.0:
                hit_time = t
                break
            if bridge and 2.0 * w * w1 < _BRIDGE_SKIP * h:
                if rng_u01(st) < math.exp(-2.0 * w * w1 / h):
                    hit_time = t
                    break
            w = w1
        if capped:
            break

        if nd == dk.shape[0]:
            dk = _grow(dk)
            dv = _grow(dv)
        if hit_time >= 0.0:
            if hit_time < min_hit:
                min_hit = hit_time
            nd = _heap_push(dk, dv, nd, hit_time, 0.0)
        elif death <= horizon and death <= min_hit:
            events += 1
            if events > max_events:
                capped = True
                frontier = death
                break
            if death > last_death:
                last_death = death
            nd = _heap_push(dk, dv, nd, death, 0.0)
            k = sample_offspring(st, cum)
            for _ in range(k):
                if nb == bk.shape[0]:
                    bk = _grow(bk)
                    bx = _grow(bx)
                nb = _heap_push(bk, bx, nb, death, w)
        elif horizon <= min_hit:
            any_alive_horizon = True
            nd = _heap_push(dk, dv, nd, np.inf, 0.0)
        else:
            # truncated at an already-known hit; fate beyond it is irrelevant
            nd = _heap_push(dk, dv, nd, np.inf, 0.0)

    if capped:
        return STATUS_CAPPED, min_hit, frontier, peak, events
    if min_hit < np.inf:
        return STATUS_HIT, min_hit, min_hit, peak, events
    if any_alive_horizon:
        return STATUS_ALIVE, np.inf, horizon, peak, events
    return STATUS_EXTINCT, np.inf, last_death, peak, events


@njit(cache=True, nogil=True)
def chunk_pr(seed, idx0, nrep, start_x, lam, cum, horizon, dt, bridge,
             max_particles, max_events,
             out_status, out_hit, out_end, out_peak, out_events, off):
    for j in range(nrep):
        s, fh, et, pk, ev = replicate_pr(
            seed, idx0 + j, start_x, lam, cum, horizon, dt, bridge,
            max_particles, max_events,
        )
        out_status[off + j] = s
        out_hit[off + j] = fh
        out_end[off + j] = et
        out_peak[off + j] = pk
        out_events[off + j] = ev


@njit(cache=True, nogil=True)
def replicate_q(seed, index, start_x, lam, cum, t_query, dt, bridge,
                max_particles, max_events, pos_out):
    """One replicate of the stopped process, snapshotted at t_query.

    Particles that touch the barrier freeze there forever and are counted in
    ``frozen``; particles alive at t_query have their positions written to
    ``pos_out`` (counted in full even when the buffer is too small, in which
    case the status reports overflow). Randomness is consumed in the same
    order as replicate_pr, so no-hit replicates coincide path for path.
    """
    st = np.empty(4, np.uint64)
    sp = np.zeros(2, np.float64)
    rng_init(st, seed, index)

    bk = np.empty(64, np.float64)
    bx = np.empty(64, np.float64)
    nb = 0
    dk = np.empty(64, np.float64)
    dv = np.empty(64, np.float64)
    nd = 0
    nb = _heap_push(bk, bx, nb, 0.0, start_x)

    frozen = 0
    n_alive_at_q = 0
    alive = 0
    peak = 0
    events = 0
    capped = False
    sqrt_dt = math.sqrt(dt)
    stride = pos_out.shape[0]

    while nb > 0:
        b, x, nb = _heap_pop(bk, bx, nb)
        while nd > 0 and dk[0] <= b:
            _, _, nd = _heap_pop(dk, dv, nd)
            alive -= 1
        alive += 1
        if alive > peak:
            peak = alive
        if alive > max_particles:
            capped = True
            break

        lifetime = -math.log(1.0 - rng_u01(st)) / lam
        death = b + lifetime
        t_end = death
        if t_query < t_end:
            t_end = t_query

        w = x
        t = b
        hit_time = -1.0
        while t_end - t > 1e-12 * dt:
            rem = t_end - t
            if rem > dt:
                h = dt
                sh = sqrt_dt
            else:
                h = rem
                sh = math.sqrt(rem)
            events += 1
            if events > max_events:
                capped = True
                break
            w1 = w + sh * rng_normal(st, sp)
            t += h
            if w1 <= 0.0:
                hit_time = t
                break
            if bridge and 2.0 * w * w1 < _BRIDGE_SKIP * h:
                if rng_u01(st) < math.exp(-2.0 * w * w1 / h):
                    hit_time = t
                    break
            w = w1
        if capped:
            break

        if nd == dk.shape[0]:
            dk = _grow(dk)
            dv = _grow(dv)
        if hit_time >= 0.0:
            frozen += 1
            nd = _heap_push(dk, dv, nd, np.inf, 0.0)
        elif death <= t_query:
            events += 1
            if events > max_events:
                capped = True
                break
            nd = _heap_push(dk, dv, nd, death, 0.0)
            k = sample_offspring(st, cum)
            for _ in range(k):
                if nb == bk.shape[0]:
                    bk = _grow(bk)
                    bx = _grow(bx)
                nb = _heap_push(bk, bx, nb, death, w)
        else:
            if n_alive_at_q < stride:
                pos_out[n_alive_at_q] = w
            n_alive_at_q += 1
            nd = _heap_push(dk, dv, nd, np.inf, 0.0)

    if capped:
        return STATUS_CAPPED, n_alive_at_q, frozen, peak, events
    if n_alive_at_q > stride:
        return STATUS_OVERFLOW, n_alive_at_q, frozen, peak, events
    return 0, n_alive_at_q, frozen, peak, events


@njit(cache=True, nogil=True)
def chunk_q(seed, idx0, nrep, start_x, lam, cum, t_query, dt, bridge,
            max_particles, max_events,
            out_status, out_alive, out_frozen, out_peak, out_events,
            pos_out, off):
    for j in range(nrep):
        s, na, fr, pk, ev = replicate_q(
            seed, idx0 + j, start_x, lam, cum, t_query, dt, bridge,
            max_particles, max_events, pos_out[off + j],
        )
        out_status[off + j] = s
        out_alive[off + j] = na
        out_frozen[off + j] = fr
        out_peak[off + j] = pk
        out_events[off + j] = ev
