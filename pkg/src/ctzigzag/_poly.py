"""Compiled polynomial helpers for event-time inversion.

Coefficient arrays are in ascending order, ``c[k]`` multiplies ``s**k``.
Everything here is ``njit``-compiled so the sampler loops can call it
without leaving native code.
"""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)

# a proposal whose true rate exceeds its bound by more than this is a bug, not rounding
VIOLATION_RTOL = 1e-9
VIOLATION_ATOL = 1e-12


@njit(**_JIT)
def degree(c):
    """Index of the highest nonzero coefficient, or -1 for the zero polynomial."""
    n = c.shape[0] - 1
    while n >= 0 and c[n] == 0.0:
        n -= 1
    return n


@njit(**_JIT)
def horner(c, n, s):
    acc = 0.0
    for k in range(n, -1, -1):
        acc = acc * s + c[k]
    return acc


@njit(**_JIT)
def antiderivative(c, n, s):
    """Evaluate the antiderivative of ``c`` vanishing at zero."""
    acc = 0.0
    for k in range(n, -1, -1):
        acc = acc * s + c[k] / (k + 1)
    return acc * s


@njit(**_JIT)
def horner_abs(c, n, s):
    """Sum of ``|c_k| s^k`` for ``s >= 0``: the magnitude of the terms behind ``poly(s)``."""
    acc = 0.0
    for k in range(n, -1, -1):
        acc = acc * s + abs(c[k])
    return acc


@njit(**_JIT)
def bound_exceeded(rate, bound, scale):
    """True when ``rate`` exceeds ``bound`` beyond rounding in terms of size ``scale``."""
    return rate > bound + VIOLATION_RTOL * max(bound, scale) + VIOLATION_ATOL


@njit(**_JIT)
def rate_bound_value(c, s):
    """``max(0, poly(s))``."""
    n = degree(c)
    if n < 0:
        return 0.0
    return max(0.0, horner(c, n, s))


@njit(**_JIT)
def cauchy_radius(c, n):
    """All complex roots of ``c`` lie strictly inside this radius.

    The textbook bound ``1 + max |c_k / c_n|`` can round onto a root, so it is doubled.
    """
    lead = abs(c[n])
    r = 0.0
    for k in range(n):
        r = max(r, abs(c[k]) / lead)
    return 2.0 * (1.0 + r)


@njit(**_JIT)
def _bisect_root(c, n, a, b, fa):
    # c has opposite signs at a and b; fa = poly(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = horner(c, n, mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (fa > 0.0):
            a = mid
            fa = fm
        else:
            b = mid
    return 0.5 * (a + b)


@njit(**_JIT)
def _quadratic_roots(c0, c1, c2, lo, hi, out):
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc <= 0.0:
        return 0
    sq = math.sqrt(disc)
    q = -0.5 * (c1 + sq) if c1 >= 0.0 else -0.5 * (c1 - sq)
    r1 = q / c2
    r2 = c0 / q
    if r1 > r2:
        r1, r2 = r2, r1
    m = 0
    if lo < r1 < hi:
        out[m] = r1
        m += 1
    if lo < r2 < hi and r2 != r1:
        out[m] = r2
        m += 1
    return m


@njit(**_JIT)
def sign_change_roots(c, lo, hi, out):
    """Sign-changing real roots of ``c`` in the open interval (lo, hi).

    Roots are written to ``out`` in ascending order and their count is
    returned. Degrees up to two use closed forms; higher degrees isolate
    roots between consecutive critical points (where the polynomial is
    monotone) and bisect to machine precision. Roots of even multiplicity
    do not change sign and are skipped, which is all the integration of
    ``max(0, poly)`` needs.
    """
    n = degree(c)
    if n <= 0:
        return 0
    if n == 1:
        r = -c[0] / c[1]
        if lo < r < hi:
            out[0] = r
            return 1
        return 0
    if n == 2:
        return _quadratic_roots(c[0], c[1], c[2], lo, hi, out)

    # derivative chain: chain[k] holds the k-th derivative, degree n - k
    chain = np.zeros((n - 1, n + 1))
    for k in range(n + 1):
        chain[0, k] = c[k]
    for lvl in range(1, n - 1):
        for k in range(n - lvl + 1):
            chain[lvl, k] = chain[lvl - 1, k + 1] * (k + 1)

    crit = np.empty(n + 1)
    roots = np.empty(n + 1)
    lvl = n - 2
    m = _quadratic_roots(chain[lvl, 0], chain[lvl, 1], chain[lvl, 2], lo, hi, roots)
    for lvl in range(n - 3, -1, -1):
        deg = n - lvl
        p = chain[lvl, : deg + 1]
        for i in range(m):
            crit[i] = roots[i]
        nc = m
        m = 0
        a = lo
        fa = horner(p, deg, a)
        for i in range(nc + 1):
            b = crit[i] if i < nc else hi
            fb = horner(p, deg, b)
            if fa * fb < 0.0:
                roots[m] = _bisect_root(p, deg, a, b, fa)
                m += 1
            a = b
            fa = fb
    for i in range(m):
        out[i] = roots[i]
    return m


@njit(**_JIT)
def _solve_segment(c, n, a, b, base, need, scale_tol):
    """Find t in [a, b] with P(t) - base = need, P increasing on [a, b]."""
    lo = a
    hi = b
    if b - a > 1.0:
        # bracket by doubling outwards from a so wide segments stay cheap to bisect
        width = 1.0
        hi = a + width
        while antiderivative(c, n, hi) - base < need:
            if hi >= b:
                break
            lo = hi
            width *= 2.0
            hi = min(a + width, b)
            if width > 1e300:
                return math.inf
    t = 0.5 * (lo + hi)
    for _ in range(200):
        f = antiderivative(c, n, t) - base - need
        rate = horner(c, n, t)
        if abs(f) <= scale_tol:
            # one more Newton step is nearly free and lands at rounding level
            if rate > 0.0:
                tn = t - f / rate
                if lo <= tn <= hi:
                    return tn
            return t
        if f > 0.0:
            hi = t
        else:
            lo = t
        step_ok = False
        if rate > 0.0:
            tn = t - f / rate
            if lo < tn < hi:
                t = tn
                step_ok = True
        if not step_ok:
            tn = 0.5 * (lo + hi)
            if tn <= lo or tn >= hi:
                return t
            t = tn
    return t


@njit(**_JIT)
def first_event(c, horizon, target, tol):
    """First t in [0, horizon] with integral of max(0, poly) equal to ``target``.

    Returns ``inf`` when the integral over the horizon falls short.
    """
    n = degree(c)
    if n < 0:
        return math.inf
    if n == 0:
        if c[0] <= 0.0:
            return math.inf
        t = target / c[0]
        return t if t <= horizon else math.inf

    hi = horizon
    if not math.isfinite(hi):
        hi = cauchy_radius(c, n)
    roots = np.empty(n + 2)
    m = sign_change_roots(c, 0.0, hi, roots)
    scale_tol = tol * (1.0 + target)

    cum = 0.0
    a = 0.0
    for i in range(m + 1):
        b = roots[i] if i < m else horizon
        if i == m and not math.isfinite(b):
            # beyond every root the sign follows the leading coefficient
            positive = c[n] > 0.0
        else:
            positive = horner(c, n, 0.5 * (a + b)) > 0.0
        if positive:
            pa = antiderivative(c, n, a)
            if not math.isfinite(b):
                return _solve_segment(c, n, a, b, pa, target - cum, scale_tol)
            seg = antiderivative(c, n, b) - pa
            if not math.isfinite(seg):
                # astronomically distant root: the mass overflows, search outward from a
                return _solve_segment(c, n, a, math.inf, pa, target - cum, scale_tol)
            if cum + seg >= target:
                return _solve_segment(c, n, a, b, pa, target - cum, scale_tol)
            cum += seg
        a = b
    return math.inf


@njit(**_JIT)
def first_event_linear(a, b, target):
    """Closed-form first event of ``max(0, a + b s)`` on an infinite horizon."""
    if b == 0.0:
        return target / a if a > 0.0 else math.inf
    if b > 0.0:
        if a >= 0.0:
            return 2.0 * target / (a + math.sqrt(a * a + 2.0 * b * target))
        return -a / b + math.sqrt(2.0 * target / b)
    # decreasing rate: total mass a^2 / (2|b|)
    if a <= 0.0 or target > a * a / (-2.0 * b):
        return math.inf
    return 2.0 * target / (a + math.sqrt(max(0.0, a * a + 2.0 * b * target)))


@njit(**_JIT)
def taylor_shift(c, h):
    """Coefficients of ``s -> poly(s + h)``."""
    n = c.shape[0]
    out = c.copy()
    for i in range(n - 1):
        for k in range(n - 2, i - 1, -1):
            out[k] += h * out[k + 1]
    return out
