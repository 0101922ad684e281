"""Untempered Zig-Zag: flow, event loop and path discretization."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import _kernels
from .event_times import DEFAULT_TOL, BoundViolation
from .models import TargetModel
from .state import ExtendedState, Mode, Skeleton, StateError

NO_LIMIT = np.iinfo(np.int64).max // 2


class FlowError(ValueError):
    pass


class SamplerError(RuntimeError):
    pass


def flow(state: ExtendedState, h: float) -> ExtendedState:
    """Move ``h`` time units along the deterministic dynamics."""
    if h < 0:
        raise FlowError("flow time must be non-negative")
    if h == 0:
        return state
    x = state.x + h * state.effective_velocity
    beta = state.beta
    if state.mode is Mode.TEMPERING:
        beta = state.beta + h * state.v_beta
        if not 0.0 <= beta <= 1.0:
            raise FlowError(
                f"flow of {h} carries beta from {state.beta} to {beta}; split at the boundary"
            )
    return state.replace(x=x, beta=beta)


def flip_rates(model: TargetModel, state: ExtendedState) -> np.ndarray:
    """``max(0, -v_i d_i log q(x))`` for every coordinate."""
    g = model.gradient(state.x)
    if not np.all(np.isfinite(g)):
        raise SamplerError("nonfinite gradient")
    return np.maximum(0.0, -state.v * g)


def resolve_horizon(n_events, path_time) -> tuple[int, float]:
    if (n_events is None) == (path_time is None):
        raise ValueError("give exactly one of n_events or path_time")
    if n_events is not None:
        if int(n_events) < 0:
            raise ValueError("n_events must be non-negative")
        return int(n_events), math.inf
    if not path_time > 0:
        raise ValueError("path_time must be positive")
    return NO_LIMIT, float(path_time)


def make_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def initial_state(x, rng: np.random.Generator, **kw) -> ExtendedState:
    """State at ``x`` with velocities drawn uniformly from ``{-1, +1}^d``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = rng.choice(np.array([-1, 1], dtype=np.int8), size=x.size)
    return ExtendedState(x=x, v=v, **kw)


def to_skeleton(status, rec, proposals, accepted, extras=None) -> Skeleton:
    t, kind, index, x, v, beta, v_beta, mode, stuck = rec
    skeleton = Skeleton(
        t=t, kind=kind, index=index, x=x, v=v, beta=beta, v_beta=v_beta, mode=mode,
        stuck=stuck, proposal_count=int(proposals), accepted_count=int(accepted),
        extras=dict(extras or {}),
    )
    if status == _kernels.BOUND_VIOLATION:
        raise BoundViolation(
            f"thinning bound violated at t={t[-1]}", where=float(t[-1]),
            rate=skeleton.extras.get("rate"), bound=skeleton.extras.get("bound"),
        )
    if status == _kernels.NONFINITE:
        raise SamplerError(f"nonfinite gradient or log-density at t={t[-1]}")
    if status == _kernels.NO_EVENT:
        raise SamplerError("every event clock is infinite; the process never stops moving")
    return skeleton


def run_zigzag(
    model: TargetModel,
    init: ExtendedState | np.ndarray,
    n_events: int | None = None,
    path_time: float | None = None,
    rng_seed=0,
    tol: float = DEFAULT_TOL,
) -> Skeleton:
    """Simulate Zig-Zag targeting ``model`` by thinning against linear bounds.

    ``init`` may be a bare position, in which case velocities are drawn
    uniformly from the generator before the run starts.
    """
    rng = make_rng(rng_seed)
    if not isinstance(init, ExtendedState):
        init = initial_state(init, rng)
    if init.mode is not Mode.UNTEMPERED:
        raise StateError("run_zigzag expects an untempered initial state")
    if init.dim != model.dim:
        raise StateError(f"state dimension {init.dim} does not match model dimension {model.dim}")
    if np.any(init.v == 0):
        raise StateError("every velocity must be +/-1")
    max_events, max_time = resolve_horizon(n_events, path_time)
    status, rec, props, acc, lam, lam_bar = _kernels.tempered_loop(
        model.params, model.params, model.hessian_row_sums, model.hessian_row_sums,
        0.0, 0.0, np.zeros(1), 0.0, False, 1.0,
        np.array(init.x, dtype=float), np.array(init.v, dtype=np.int8), math.nan, 0,
        int(Mode.UNTEMPERED), max_events, max_time, rng, tol,
    )
    return to_skeleton(status, rec, props, acc, dict(rate=lam, bound=lam_bar))


class Samples(NamedTuple):
    t: np.ndarray
    x: np.ndarray
    beta: np.ndarray
    mode: np.ndarray
    stuck: np.ndarray


def discretize(skeleton: Skeleton, dt: float, burnin: float = 0.0) -> Samples:
    """Evaluate the path at ``burnin, burnin + dt, ...`` up to the total time."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if burnin < 0:
        raise ValueError("burnin must be non-negative")
    total = skeleton.total_time
    if burnin >= total:
        raise ValueError(f"burn-in {burnin} leaves no path time (total {total})")
    n = int(math.floor((total - burnin) / dt * (1 + 1e-12))) + 1
    times = burnin + dt * np.arange(n)
    times = times[times <= total]
    k = np.searchsorted(skeleton.t, times, side="right") - 1
    h = times - skeleton.t[k]
    x = skeleton.x[k] + h[:, None] * skeleton.effective_velocity[k]
    beta = skeleton.beta[k] + h * skeleton.v_beta[k]
    return Samples(times, x, beta, skeleton.mode[k].copy(), skeleton.stuck[k].copy())
