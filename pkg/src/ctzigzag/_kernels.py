"""Compiled event loops.

Both loops keep an anchor (time, position, beta) at the last recorded
event and evaluate the current position as ``anchor + elapsed * v``, so
every recorded state is the flow of its predecessor. Tracking the time
elapsed since the anchor, rather than differencing absolute times, keeps
positions free of the rounding of a large clock. Rejected
thinning proposals move the clock without recording anything; all bounds
are re-derived at the new state before the next proposal.
"""

import math

import numpy as np
from numba import njit

from ._poly import bound_exceeded, degree, first_event, first_event_linear, horner, horner_abs
from .models import model_grad, model_logq
from .event_times import (
    beta_bound_coeffs,
    log_kappa_slope,
    xbound_coeffs,
)

_JIT = dict(cache=True, nogil=True)

# modes
TEMPERING = 0
TARGET = 1
UNTEMPERED = 2

# event kinds
INITIAL = 0
FINAL = 1
FLIP_X = 2
FLIP_BETA = 3
HIT_BETA_ONE = 4
EXIT_BETA_ONE = 5
REFLECT_BETA_ZERO = 6
REFLECT_BETA_ONE = 7
STICK = 8
UNSTICK = 9

# status codes
OK = 0
BOUND_VIOLATION = 1
NONFINITE = 2
NO_EVENT = 3


@njit(**_JIT)
def _alloc(cap, d):
    return (
        np.empty(cap),
        np.empty(cap, np.int8),
        np.empty(cap, np.int32),
        np.empty((cap, d)),
        np.empty((cap, d), np.int8),
        np.empty(cap),
        np.empty(cap, np.int8),
        np.empty(cap, np.int8),
        np.empty((cap, d), np.bool_),
    )


@njit(**_JIT)
def _grow(rec, n):
    cap = rec[0].shape[0]
    d = rec[3].shape[1]
    new = _alloc(2 * cap, d)
    new[0][:n] = rec[0][:n]
    new[1][:n] = rec[1][:n]
    new[2][:n] = rec[2][:n]
    new[3][:n] = rec[3][:n]
    new[4][:n] = rec[4][:n]
    new[5][:n] = rec[5][:n]
    new[6][:n] = rec[6][:n]
    new[7][:n] = rec[7][:n]
    new[8][:n] = rec[8][:n]
    return new


@njit(**_JIT)
def _put(rec, n, t, kind, idx, x, v, beta, vb, mode, stuck):
    rec[0][n] = t
    rec[1][n] = kind
    rec[2][n] = idx
    rec[3][n] = x
    rec[4][n] = v
    rec[5][n] = beta
    rec[6][n] = vb
    rec[7][n] = mode
    rec[8][n] = stuck


@njit(**_JIT)
def _trim(rec, n):
    return (
        rec[0][:n].copy(), rec[1][:n].copy(), rec[2][:n].copy(), rec[3][:n].copy(),
        rec[4][:n].copy(), rec[5][:n].copy(), rec[6][:n].copy(), rec[7][:n].copy(),
        rec[8][:n].copy(),
    )


@njit(**_JIT)
def _all_finite(a):
    for i in range(a.shape[0]):
        if not math.isfinite(a[i]):
            return False
    return True


@njit(**_JIT)
def _initial_capacity(max_events):
    if max_events < 4_000_000:
        return max_events + 2
    return 1 << 16


@njit(**_JIT)
def _mixed_grad(p, p0, weight, x):
    g = model_grad(p, x)
    if weight == 1.0:
        return g
    return weight * g + (1.0 - weight) * model_grad(p0, x)


@njit(**_JIT)
def tempered_loop(
    p, p0, m_row, m0_row, c_q, c_q0, psi, eta, point_mass, fixed_beta,
    x0, v0, beta0, vb0, mode0,
    max_events, max_time, rng, tol,
):
    """Continuously-tempered Zig-Zag; also runs plain Zig-Zag in UNTEMPERED mode.

    ``p`` and ``p0`` are packed target and base parameters. In UNTEMPERED
    mode the process targets ``q^w q0^(1-w)`` with ``w = fixed_beta`` and
    ``m_row`` must already bound that geometric mixture.

    Clock indices: ``0..d-1`` position flips, ``d`` inverse temperature,
    ``d+1`` beta boundary, ``d+2`` exit from beta = 1. Ties go to the
    lowest index.
    """
    d = x0.shape[0]
    rec = _alloc(_initial_capacity(max_events), d)
    stuck = np.zeros(d, np.bool_)
    v = v0.astype(np.float64)
    v_rec = v0.astype(np.int8)
    vb = float(vb0)
    mode = mode0
    beta = beta0
    t = 0.0
    x = x0.copy()
    t_anchor = 0.0
    elapsed = 0.0
    x_anchor = x0.copy()
    beta_anchor = beta0
    n = 0
    _put(rec, n, 0.0, INITIAL, -1, x, v_rec, beta, vb, mode, stuck)
    n += 1

    status = OK
    info_rate = 0.0
    info_bound = 0.0
    proposals = 0
    accepted = 0
    n_events = 0

    untempered = mode == UNTEMPERED
    g = _mixed_grad(p, p0, fixed_beta, x) if untempered else model_grad(p, x)
    g0 = np.zeros(d)
    lq = 0.0
    lq0 = 0.0
    if mode == TEMPERING:
        g0 = model_grad(p0, x)
        lq = model_logq(p, x)
        lq0 = model_logq(p0, x)
    exit_time = math.inf
    if mode == TARGET and eta > 0.0:
        exit_time = rng.standard_exponential() / eta

    nb = max(3, psi.shape[0] - 1)
    cx = np.zeros(3)
    cb = np.zeros(nb)
    best_c = np.zeros(max(3, nb))

    while n_events < max_events:
        if not (_all_finite(g) and (mode != TEMPERING or (
                _all_finite(g0) and math.isfinite(lq) and math.isfinite(lq0)))):
            status = NONFINITE
            break
        best = -1
        best_tau = math.inf
        if mode == TEMPERING:
            horizon = 1.0 - beta if vb > 0 else beta
            for j in range(d):
                xbound_coeffs(beta, vb, -v[j] * g[j], -v[j] * g0[j], m_row[j], m0_row[j], cx)
                tau = first_event(cx, horizon, rng.standard_exponential(), tol)
                if tau < best_tau:
                    best_tau = tau
                    best = j
                    best_c[:] = 0.0
                    best_c[:3] = cx
            dq = 0.0
            dq0 = 0.0
            for j in range(d):
                dq += v[j] * g[j]
                dq0 += v[j] * g0[j]
            beta_bound_coeffs(beta, vb, psi, lq, lq0, dq, dq0, c_q, c_q0, cb)
            tau = first_event(cb, horizon, rng.standard_exponential(), tol)
            if tau < best_tau:
                best_tau = tau
                best = d
                best_c[:] = 0.0
                best_c[:nb] = cb
            if horizon < best_tau:
                best_tau = horizon
                best = d + 1
        else:
            for j in range(d):
                a = -v[j] * g[j]
                tau = first_event_linear(a, m_row[j], rng.standard_exponential())
                if tau < best_tau:
                    best_tau = tau
                    best = j
                    best_c[:] = 0.0
                    best_c[0] = a
                    best_c[1] = m_row[j]
            if mode == TARGET and exit_time - t < best_tau:
                best_tau = exit_time - t
                best = d + 2

        if t + best_tau >= max_time:
            t = max_time
            for i in range(d):
                x[i] = x_anchor[i] + (t - t_anchor) * v[i]
            if mode == TEMPERING:
                beta = min(1.0, max(0.0, beta_anchor + (t - t_anchor) * vb))
            break
        if best < 0:
            status = NO_EVENT
            break

        elapsed += best_tau
        t = t_anchor + elapsed
        for i in range(d):
            x[i] = x_anchor[i] + elapsed * v[i]
        was_tempering = mode == TEMPERING
        if was_tempering:
            beta = beta_anchor + elapsed * vb
        g = _mixed_grad(p, p0, fixed_beta, x) if untempered else model_grad(p, x)
        if was_tempering:
            g0 = model_grad(p0, x)
            lq = model_logq(p, x)
            lq0 = model_logq(p0, x)

        kind = -1
        idx = -1
        if best == d + 1:
            if vb > 0:
                beta = 1.0
                if point_mass:
                    vb = 0.0
                    mode = TARGET
                    kind = HIT_BETA_ONE
                    exit_time = t + rng.standard_exponential() / eta if eta > 0.0 else math.inf
                else:
                    vb = -1.0
                    kind = REFLECT_BETA_ONE
            else:
                beta = 0.0
                vb = 1.0
                kind = REFLECT_BETA_ZERO
        elif best == d + 2:
            vb = -1.0
            mode = TEMPERING
            kind = EXIT_BETA_ONE
            g0 = model_grad(p0, x)
            lq = model_logq(p, x)
            lq0 = model_logq(p0, x)
        else:
            proposals += 1
            if best < d:
                if was_tempering:
                    grad_j = beta * g[best] + (1.0 - beta) * g0[best]
                else:
                    grad_j = g[best]
                lam = max(0.0, -v[best] * grad_j)
            else:
                lam = max(0.0, -vb * (lq - lq0 + log_kappa_slope(psi, beta)))
            nd = degree(best_c)
            lam_bar = max(0.0, horner(best_c, nd, best_tau)) if nd >= 0 else 0.0
            if not math.isfinite(lam):
                status = NONFINITE
                break
            scale = horner_abs(best_c, nd, best_tau) if nd >= 0 else 0.0
            if bound_exceeded(lam, lam_bar, scale):
                status = BOUND_VIOLATION
                info_rate = lam
                info_bound = lam_bar
                break
            if rng.random() * lam_bar < lam:
                accepted += 1
                if best < d:
                    v[best] = -v[best]
                    v_rec[best] = -v_rec[best]
                    kind = FLIP_X
                    idx = best
                else:
                    vb = -vb
                    kind = FLIP_BETA

        if kind >= 0:
            if n + 2 > rec[0].shape[0]:
                rec = _grow(rec, n)
            _put(rec, n, t, kind, idx, x, v_rec, beta, vb, mode, stuck)
            n += 1
            n_events += 1
            t_anchor = t
            elapsed = 0.0
            beta_anchor = beta
            x_anchor[:] = x

    if n + 1 > rec[0].shape[0]:
        rec = _grow(rec, n)
    _put(rec, n, t, FINAL, -1, x, v_rec, beta, vb, mode, stuck)
    n += 1
    return status, _trim(rec, n), proposals, accepted, info_rate, info_bound


@njit(**_JIT)
def sticky_loop(
    w, m, sigma2, eta, point_mass, refresh,
    x0, v0, stuck0, beta0, vb0, mode0,
    max_events, max_time, rng,
):
    """Tempered sticky Zig-Zag for the product spike-and-slab target.

    Clock indices: ``0..d-1`` flips of active coordinates, ``d..2d-1``
    sticking at zero, ``2d..3d-1`` unsticking (thinned against the
    beta-free bound while tempering), ``3d`` inverse temperature,
    ``3d+1`` beta boundary, ``3d+2`` exit from beta = 1.
    """
    d = x0.shape[0]
    rec = _alloc(_initial_capacity(max_events), d)
    v = v0.astype(np.float64)
    v_rec = v0.astype(np.int8)
    stuck = stuck0.copy()
    vb = float(vb0)
    mode = mode0
    beta = beta0
    t = 0.0
    x = x0.copy()
    t_anchor = 0.0
    elapsed = 0.0
    x_anchor = x0.copy()
    beta_anchor = beta0
    n = 0
    _put(rec, n, 0.0, INITIAL, -1, x, v_rec, beta, vb, mode, stuck)
    n += 1

    inv_s2 = 1.0 / sigma2
    unstick_cap = w / (1.0 - w) / math.sqrt(2.0 * math.pi * sigma2)
    status = OK
    proposals = 0
    accepted = 0
    n_events = 0
    exit_time = math.inf
    if mode == TARGET and eta > 0.0:
        exit_time = rng.standard_exponential() / eta

    while n_events < max_events:
        best = -1
        best_tau = math.inf
        tempering = mode == TEMPERING
        b_now = beta if tempering else 1.0
        vb_now = vb if tempering else 0.0
        sum_a = 0.0
        sum_b = 0.0
        for i in range(d):
            if stuck[i]:
                continue
            # exact linear flip rate of an active slab coordinate
            a = v[i] * inv_s2 * (x[i] - m * b_now)
            b = v[i] * inv_s2 * (v[i] - m * vb_now)
            tau = first_event_linear(a, b, rng.standard_exponential())
            if tau < best_tau:
                best_tau = tau
                best = i
            sum_a += x[i] - m * b_now
            sum_b += v[i] - m * vb_now
        for i in range(d):
            if not stuck[i] and x[i] * v[i] < 0.0:
                tau = -x[i] / v[i]
                if tau < best_tau:
                    best_tau = tau
                    best = d + i
        for i in range(d):
            if stuck[i]:
                if tempering:
                    tau = rng.standard_exponential() / unstick_cap
                else:
                    tau = rng.standard_exponential() / (
                        unstick_cap * math.exp(-0.5 * m * m * inv_s2))
                if tau < best_tau:
                    best_tau = tau
                    best = 2 * d + i
        if tempering:
            scale = -m * vb * inv_s2
            tau = first_event_linear(scale * sum_a, scale * sum_b, rng.standard_exponential())
            if tau < best_tau:
                best_tau = tau
                best = 3 * d
            horizon = 1.0 - beta if vb > 0 else beta
            if horizon < best_tau:
                best_tau = horizon
                best = 3 * d + 1
        elif mode == TARGET and exit_time - t < best_tau:
            best_tau = exit_time - t
            best = 3 * d + 2

        if t + best_tau >= max_time:
            t = max_time
            for i in range(d):
                if not stuck[i]:
                    x[i] = x_anchor[i] + (t - t_anchor) * v[i]
            if tempering:
                beta = min(1.0, max(0.0, beta_anchor + (t - t_anchor) * vb))
            break
        if best < 0:
            status = NO_EVENT
            break

        elapsed += best_tau
        t = t_anchor + elapsed
        for i in range(d):
            if not stuck[i]:
                x[i] = x_anchor[i] + elapsed * v[i]
        if tempering:
            beta = beta_anchor + elapsed * vb

        kind = -1
        idx = -1
        if best < d:
            v[best] = -v[best]
            v_rec[best] = -v_rec[best]
            kind = FLIP_X
            idx = best
        elif best < 2 * d:
            i = best - d
            x[i] = 0.0
            stuck[i] = True
            kind = STICK
            idx = i
        elif best < 3 * d:
            i = best - 2 * d
            take = True
            if tempering:
                proposals += 1
                take = rng.random() < math.exp(-0.5 * m * m * beta * beta * inv_s2)
                if take:
                    accepted += 1
            if take:
                stuck[i] = False
                if refresh:
                    s = 1.0 if rng.random() < 0.5 else -1.0
                    v[i] = s
                    v_rec[i] = np.int8(s)
                kind = UNSTICK
                idx = i
        elif best == 3 * d:
            vb = -vb
            kind = FLIP_BETA
        elif best == 3 * d + 1:
            if vb > 0:
                beta = 1.0
                if point_mass:
                    vb = 0.0
                    mode = TARGET
                    kind = HIT_BETA_ONE
                    exit_time = t + rng.standard_exponential() / eta if eta > 0.0 else math.inf
                else:
                    vb = -1.0
                    kind = REFLECT_BETA_ONE
            else:
                beta = 0.0
                vb = 1.0
                kind = REFLECT_BETA_ZERO
        else:
            vb = -1.0
            mode = TEMPERING
            kind = EXIT_BETA_ONE

        if kind >= 0:
            if n + 2 > rec[0].shape[0]:
                rec = _grow(rec, n)
            _put(rec, n, t, kind, idx, x, v_rec, beta, vb, mode, stuck)
            n += 1
            n_events += 1
            t_anchor = t
            elapsed = 0.0
            beta_anchor = beta
            x_anchor[:] = x

    if n + 1 > rec[0].shape[0]:
        rec = _grow(rec, n)
    _put(rec, n, t, FINAL, -1, x, v_rec, beta, vb, mode, stuck)
    n += 1
    return status, _trim(rec, n), proposals, accepted
