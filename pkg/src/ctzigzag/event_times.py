"""First-event simulation for inhomogeneous Poisson processes.

Exact inversion for polynomial rates ``max(0, sum_k c_k s^k)``, thinning
against such bounds, and the bound constructions used by the samplers:
the linear Hessian bound for a single density and the quadratic /
polynomial bounds along a geometric tempering path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from numba import njit

from . import _poly
from ._poly import VIOLATION_ATOL, VIOLATION_RTOL, bound_exceeded  # noqa: F401
from .state import ExtendedState, Mode

if TYPE_CHECKING:
    from .models import TargetModel
    from .tempering import GeometricPath, LogKappa

_JIT = dict(cache=True, nogil=True)

DEFAULT_TOL = 1e-10


class BoundViolation(RuntimeError):
    """A true event rate exceeded its thinning bound."""

    def __init__(self, message, rate=None, bound=None, where=None):
        super().__init__(message)
        self.rate = rate
        self.bound = bound
        self.where = where


class NoRootIsolation(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RateBound:
    """Upper rate ``max(0, poly(s))`` valid for ``0 <= s <= horizon``."""

    coeffs: np.ndarray
    horizon: float = math.inf

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float)).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty vector")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def degree(self) -> int:
        return int(_poly.degree(self.coeffs))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.maximum(0.0, np.polynomial.polynomial.polyval(s, self.coeffs))

    def magnitude(self, s: float) -> float:
        """Size of the polynomial's terms at ``s``, the scale of its rounding error."""
        c = np.array(self.coeffs)
        return float(_poly.horner_abs(c, c.size - 1, float(s)))

    def shifted(self, h: float) -> RateBound:
        """The same bound seen from time ``h`` onwards."""
        return RateBound(_poly.taylor_shift(np.array(self.coeffs), float(h)), self.horizon - h)


def _check_u(u):
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u}")


def first_event_constant(rate: float, u: float) -> float:
    _check_u(u)
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate == 0:
        return math.inf
    return -math.log(u) / rate


def first_event_poly(bound: RateBound, u: float, tol: float = DEFAULT_TOL) -> float | None:
    """Invert ``int_0^t max(0, poly) ds = -log u``; ``None`` if no event in the horizon.

    Sign-changing roots split the horizon into intervals of constant sign,
    positive intervals are integrated in closed form, and the crossing is
    located by Newton steps safeguarded by bisection.
    """
    _check_u(u)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not np.all(np.isfinite(bound.coeffs)):
        raise ValueError("rate coefficients must be finite")
    t = _poly.first_event(np.array(bound.coeffs), bound.horizon, -math.log(u), tol)
    if math.isnan(t):
        raise NoRootIsolation(f"root isolation failed for coefficients {bound.coeffs}")
    return None if math.isinf(t) else float(t)


def thinned_first_event(
    rate: Callable[[float], float],
    bound: RateBound | Callable[[float], RateBound],
    rng: np.random.Generator,
    tol: float = DEFAULT_TOL,
) -> tuple[float | None, int]:
    """First event of ``rate`` by thinning, with the number of proposals used.

    ``bound`` is either a fixed :class:`RateBound` in absolute time, or a
    callable ``s -> RateBound`` re-deriving a bound anchored at ``s`` (its
    argument ``0`` meaning time ``s``) after each rejection.
    """
    s = 0.0
    proposals = 0
    while True:
        if isinstance(bound, RateBound):
            if s >= bound.horizon:
                return None, proposals
            local = bound.shifted(s) if s > 0 else bound
        else:
            local = bound(s)
        u = 1.0 - rng.random()
        while u >= 1.0:
            u = 1.0 - rng.random()
        step = first_event_poly(local, u, tol)
        if step is None:
            return None, proposals
        proposals += 1
        s += step
        lam = float(rate(s))
        lam_bar = float(local(step))
        if bound_exceeded(lam, lam_bar, local.magnitude(step)):
            raise BoundViolation(
                f"rate {lam} exceeds bound {lam_bar} at s={s}", rate=lam, bound=lam_bar, where=s
            )
        if rng.random() * lam_bar < lam:
            return s, proposals


# -- bound constructions ------------------------------------------------------


@njit(**_JIT)
def xbound_coeffs(beta, v_beta, a_q, a_q0, b_q, b_q0, out):
    """Quadratic bound for a position rate along the geometric path."""
    out[0] = beta * a_q + (1.0 - beta) * a_q0
    out[1] = v_beta * (a_q - a_q0) + beta * b_q + (1.0 - beta) * b_q0
    out[2] = v_beta * (b_q - b_q0)


def beta_bound_size(n_psi: int) -> int:
    return max(3, n_psi - 1)


@njit(**_JIT)
def beta_bound_coeffs(beta, v_beta, psi, lq, lq0, dq, dq0, cq, cq0, out):
    """Polynomial bound on the inverse-temperature rate.

    ``dq`` and ``dq0`` are directional derivatives ``sum_j v_j d_j log q`` at
    the anchor, ``cq`` and ``cq0`` are half the entry sums of the Hessian
    bounds. The log-kappa part enters exactly after binomial expansion of
    ``(beta + v_beta s)^(k-1)``.
    """
    out[:] = 0.0
    out[0] = -v_beta * lq + v_beta * lq0
    out[1] = -v_beta * dq + v_beta * dq0
    out[2] = cq + cq0
    for k in range(1, psi.shape[0]):
        if psi[k] == 0.0:
            continue
        # C(k-1, r) beta^(k-1-r) v_beta^r for r = 0 .. k-1
        binom = 1.0
        vb_pow = 1.0
        for r in range(k):
            out[r] += v_beta * k * psi[k] * binom * beta ** (k - 1 - r) * vb_pow
            binom = binom * (k - 1 - r) / (r + 1)
            vb_pow *= v_beta


@njit(**_JIT)
def log_kappa_slope(psi, beta):
    """Derivative of ``-sum_k psi_k beta^k``."""
    acc = 0.0
    for k in range(psi.shape[0] - 1, 0, -1):
        acc = acc * beta + k * psi[k]
    return -acc


def _time_to_beta_boundary(state: ExtendedState) -> float:
    if state.v_beta > 0:
        return 1.0 - state.beta
    return state.beta


def _require_tempering(state: ExtendedState):
    if state.mode is not Mode.TEMPERING:
        raise ValueError("geometric bounds apply only in tempering mode")


def lemma1_linear_bound(model: TargetModel, x, v) -> list[RateBound]:
    """``max(0, a_i + b_i s)`` with ``a_i = -v_i d_i log q(x)``, ``b_i = sum_j M_ij``."""
    g = model.gradient(x)
    if not np.all(np.isfinite(g)):
        raise ValueError("nonfinite gradient")
    a = -np.asarray(v, dtype=float) * g
    b = model.hessian_row_sums
    return [RateBound([a[i], b[i]]) for i in range(model.dim)]


def geometric_x_bound(path: GeometricPath, state: ExtendedState, j: int) -> RateBound:
    _require_tempering(state)
    g = path.target.gradient(state.x)
    g0 = path.base.gradient(state.x)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(g0))):
        raise ValueError("nonfinite gradient")
    vj = float(state.v[j])
    out = np.empty(3)
    xbound_coeffs(
        state.beta, float(state.v_beta), -vj * g[j], -vj * g0[j],
        path.target.hessian_row_sums[j], path.base.hessian_row_sums[j], out,
    )
    return RateBound(out, _time_to_beta_boundary(state))


def geometric_beta_bound(path: GeometricPath, kappa: LogKappa, state: ExtendedState) -> RateBound:
    _require_tempering(state)
    v = state.effective_velocity
    lq = path.target.log_density(state.x)
    lq0 = path.base.log_density(state.x)
    if not (math.isfinite(lq) and math.isfinite(lq0)):
        raise ValueError("nonfinite log-density")
    dq = float(v @ path.target.gradient(state.x))
    dq0 = float(v @ path.base.gradient(state.x))
    psi = np.asarray(kappa.psi, dtype=float)
    out = np.empty(beta_bound_size(psi.size))
    beta_bound_coeffs(
        state.beta, float(state.v_beta), psi, lq, lq0, dq, dq0,
        0.5 * path.target.hessian_bound.sum(), 0.5 * path.base.hessian_bound.sum(), out,
    )
    return RateBound(out, _time_to_beta_boundary(state))
