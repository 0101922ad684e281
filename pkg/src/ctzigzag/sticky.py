"""Tempered sticky Zig-Zag for a product spike-and-slab target.

Each coordinate is ``0`` with probability ``1 - w`` and ``N(m beta, sigma2)``
otherwise. Tempering moves the slab mean from 0 to ``m``, so the slab
density is normalized at every ``beta`` and ``kappa`` is taken constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .event_times import RateBound
from .state import ExtendedState, Mode, Skeleton, StateError
from .zigzag import initial_state, make_rng, resolve_horizon, to_skeleton


@dataclass(frozen=True)
class SpikeSlabSpec:
    d: int = 2
    w: float = 0.5
    m: float = 0.0
    sigma2: float = 0.5

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not 0.0 < self.w < 1.0:
            raise ValueError("w must lie in (0, 1)")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not math.isfinite(self.m):
            raise ValueError("m must be finite")

    @property
    def exact_moments(self) -> tuple[np.ndarray, np.ndarray]:
        mean = np.full(self.d, self.w * self.m)
        second = np.full(self.d, self.w * (self.sigma2 + self.m**2))
        return mean, second

    @property
    def inclusion_probability(self) -> float:
        return self.w


def _temperature(state: ExtendedState) -> tuple[float, float]:
    if state.mode is Mode.TEMPERING:
        return state.beta, float(state.v_beta)
    if state.mode is Mode.TARGET:
        return 1.0, 0.0
    raise StateError("sticky rates need a Tempering or Target state")


def active_coordinate_rate(spec: SpikeSlabSpec, state: ExtendedState, i: int) -> RateBound:
    """Exact linear flip rate of an active coordinate along the current flow."""
    if state.stuck[i]:
        raise StateError(f"coordinate {i} is stuck")
    beta, v_beta = _temperature(state)
    v = float(state.v[i])
    a = v * (state.x[i] - spec.m * beta) / spec.sigma2
    b = (1.0 - spec.m * v * v_beta) / spec.sigma2
    return RateBound([a, b], _beta_horizon(state))


def unstick_bound(spec: SpikeSlabSpec) -> float:
    """Largest reintroduction rate, attained at ``beta = 0``."""
    return spec.w / (1.0 - spec.w) / math.sqrt(2.0 * math.pi * spec.sigma2)


def unstick_rate(spec: SpikeSlabSpec, beta: float) -> float:
    """``w / (1 - w)`` times the slab density at zero."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return unstick_bound(spec) * math.exp(-0.5 * (spec.m * beta) ** 2 / spec.sigma2)


def beta_rate_sticky(spec: SpikeSlabSpec, state: ExtendedState) -> RateBound:
    """Exact linear inverse-temperature rate, summed over active coordinates."""
    if state.mode is not Mode.TEMPERING:
        raise StateError("the inverse-temperature rate exists only in Tempering mode")
    active = ~state.stuck
    n_active = int(active.sum())
    scale = -spec.m * state.v_beta / spec.sigma2
    a = scale * float(np.sum(state.x[active] - spec.m * state.beta))
    b = scale * float(np.sum(state.v[active]) - n_active * spec.m * state.v_beta)
    return RateBound([a, b], _beta_horizon(state))


def _beta_horizon(state: ExtendedState) -> float:
    if state.mode is not Mode.TEMPERING:
        return math.inf
    t = 1.0 - state.beta if state.v_beta > 0 else state.beta
    return t if t > 0 else math.inf


def sticky_exit_rate(alpha: float) -> float:
    if not alpha > 0:
        raise ValueError("the exit rate is undefined for alpha <= 0")
    return (1.0 - alpha) / (2.0 * alpha)


def run_sticky_tempered(
    spec: SpikeSlabSpec,
    alpha: float,
    init: ExtendedState | np.ndarray | None = None,
    n_events: int | None = None,
    path_time: float | None = None,
    rng_seed=0,
    refresh: bool = False,
) -> Skeleton:
    """Simulate the sticky process; ``alpha = 1`` is plain sticky Zig-Zag at ``beta = 1``.

    Without an explicit state the chain starts at ``x = 0`` with every
    coordinate active, in Target mode for ``alpha = 1`` and otherwise at
    ``beta = 0`` moving up. ``refresh`` redraws an unsticking coordinate's
    velocity uniformly instead of resuming its retained value.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    rng = make_rng(rng_seed)
    if init is None:
        init = np.zeros(spec.d)
    if not isinstance(init, ExtendedState):
        if alpha == 1.0:
            init = initial_state(init, rng, beta=1.0, v_beta=0, mode=Mode.TARGET)
        else:
            init = initial_state(init, rng, beta=0.0, v_beta=1, mode=Mode.TEMPERING)
    if init.dim != spec.d:
        raise StateError(f"state dimension {init.dim} does not match d = {spec.d}")
    if init.mode is Mode.UNTEMPERED or np.any(init.v == 0):
        raise StateError("sticky runs need a Tempering or Target state with +/-1 velocities")
    if init.mode is Mode.TARGET and alpha == 0.0:
        raise StateError("alpha = 0 has no atom at beta = 1 to start in")
    if init.mode is Mode.TEMPERING and (
        (init.beta == 0.0 and init.v_beta < 0) or (init.beta == 1.0 and init.v_beta > 0)
    ):
        raise StateError("initial v_beta points out of [0, 1]")
    max_events, max_time = resolve_horizon(n_events, path_time)
    eta = sticky_exit_rate(alpha) if alpha > 0 else 0.0
    status, rec, props, acc = _kernels.sticky_loop(
        spec.w, spec.m, spec.sigma2, eta, alpha > 0, refresh,
        np.array(init.x, dtype=float), np.array(init.v, dtype=np.int8),
        np.array(init.stuck, dtype=np.bool_), float(init.beta), int(init.v_beta),
        int(init.mode), max_events, max_time, rng,
    )
    return to_skeleton(status, rec, props, acc, dict(eta=eta))


def sample_spike_slab(spec: SpikeSlabSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent exact draws from the untempered target."""
    include = rng.random((n, spec.d)) < spec.w
    slab = spec.m + math.sqrt(spec.sigma2) * rng.standard_normal((n, spec.d))
    return np.where(include, slab, 0.0)
