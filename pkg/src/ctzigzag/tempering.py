"""Continuously-tempered Zig-Zag along a geometric path.

The augmented target on ``(x, beta)`` mixes the geometric path
``q0^(1 - beta) q^beta`` weighted by ``(1 - alpha) kappa(beta)`` on
``[0, 1)`` with an atom of weight ``alpha kappa(1) q`` at ``beta = 1``.
The process leaves the atom at the constant rate returned by
:func:`exit_rate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .event_times import DEFAULT_TOL, log_kappa_slope
from .models import GaussianSpec, TargetModel
from .state import ExtendedState, Mode, Skeleton, StateError
from .zigzag import Samples, discretize, initial_state, make_rng, resolve_horizon, to_skeleton


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GeometricPath:
    base: TargetModel
    target: TargetModel

    def __post_init__(self):
        if self.base.dim != self.target.dim:
            raise ValueError(
                f"base dimension {self.base.dim} differs from target dimension {self.target.dim}"
            )

    @property
    def dim(self) -> int:
        return self.target.dim

    def log_density(self, x, beta: float) -> float:
        return beta * self.target.log_density(x) + (1.0 - beta) * self.base.log_density(x)

    def gradient(self, x, beta: float) -> np.ndarray:
        return beta * self.target.gradient(x) + (1.0 - beta) * self.base.gradient(x)

    def log_ratio(self, X) -> np.ndarray:
        """``log q(x) - log q0(x)`` for each row of ``X``: the beta-derivative of the path."""
        return self.target.log_density_rows(X) - self.base.log_density_rows(X)

    def hessian_bound_at(self, beta: float) -> np.ndarray:
        return beta * self.target.hessian_bound + (1.0 - beta) * self.base.hessian_bound


@dataclass(frozen=True, eq=False)
class LogKappa:
    """``kappa(beta) = exp(-sum_k psi_k beta^k)`` on ``[0, 1)``.

    ``left_limit_ratio`` is ``kappa(1-) / kappa(1)``; it scales the exit rate
    from the atom and equals 1 for a continuous kappa.
    """

    psi: np.ndarray
    left_limit_ratio: float = 1.0

    def __post_init__(self):
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float)).copy()
        if psi.ndim != 1 or psi.size == 0 or not np.all(np.isfinite(psi)):
            raise ValueError("psi must be a non-empty finite vector")
        if not self.left_limit_ratio > 0:
            raise ValueError("left_limit_ratio must be positive")
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "left_limit_ratio", float(self.left_limit_ratio))

    @classmethod
    def constant(cls) -> LogKappa:
        return cls(np.zeros(1))

    @classmethod
    def from_xi(cls, xi: float) -> LogKappa:
        """``kappa proportional to xi^(1 - beta)``, the family the IS estimator needs."""
        if not xi > 0:
            raise ValueError("xi must be positive")
        return cls(np.array([-math.log(xi), math.log(xi)]))

    @property
    def degree(self) -> int:
        return self.psi.size - 1

    def log_value(self, beta):
        return -np.polynomial.polynomial.polyval(beta, self.psi)

    def slope(self, beta: float) -> float:
        """Derivative of ``log kappa`` at ``beta``."""
        return float(log_kappa_slope(np.array(self.psi), float(beta)))


@dataclass(frozen=True, eq=False)
class TemperingConfig:
    """``alpha = 0`` selects the importance-sampling regime with no atom at 1."""

    alpha: float
    kappa: LogKappa
    path: GeometricPath

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def point_mass(self) -> bool:
        return self.alpha > 0.0


def exit_rate(config: TemperingConfig) -> float:
    if not config.alpha > 0:
        raise ValueError("the exit rate is undefined for alpha <= 0")
    return config.kappa.left_limit_ratio * (1.0 - config.alpha) / (2.0 * config.alpha)


def tempered_rates(state: ExtendedState, config: TemperingConfig) -> np.ndarray:
    """Position rates, followed by the inverse-temperature rate in Tempering mode."""
    path = config.path
    if state.mode is Mode.TARGET:
        g = path.target.gradient(state.x)
        if not np.all(np.isfinite(g)):
            raise ValueError("nonfinite gradient")
        return np.maximum(0.0, -state.v * g)
    if state.mode is not Mode.TEMPERING:
        raise StateError("tempered rates need a Tempering or Target state")
    g = path.gradient(state.x, state.beta)
    lq = path.target.log_density(state.x)
    lq0 = path.base.log_density(state.x)
    if not (np.all(np.isfinite(g)) and math.isfinite(lq) and math.isfinite(lq0)):
        raise ValueError("nonfinite density or gradient")
    rates = np.empty(state.dim + 1)
    rates[:-1] = np.maximum(0.0, -state.v * g)
    rates[-1] = max(0.0, -state.v_beta * (lq - lq0 + config.kappa.slope(state.beta)))
    return rates


def _check_init(init: ExtendedState, config: TemperingConfig):
    if init.dim != config.path.dim:
        raise StateError(f"state dimension {init.dim} does not match path dimension {config.path.dim}")
    if np.any(init.v == 0) or np.any(init.stuck):
        raise StateError("geometric tempering has no sticky coordinates; every velocity must be +/-1")
    if init.mode is Mode.UNTEMPERED:
        raise StateError("tempered runs need a Tempering or Target initial state")
    if init.mode is Mode.TARGET and not config.point_mass:
        raise StateError("alpha = 0 has no atom at beta = 1 to start in")
    if init.mode is Mode.TEMPERING:
        if init.beta == 0.0 and init.v_beta < 0:
            raise StateError("beta = 0 with v_beta = -1 points out of [0, 1]")
        if init.beta == 1.0 and init.v_beta > 0:
            raise StateError("beta = 1 with v_beta = +1 points out of [0, 1]")


def run_tempered_zigzag(
    config: TemperingConfig,
    init: ExtendedState | np.ndarray,
    n_events: int | None = None,
    path_time: float | None = None,
    rng_seed=0,
    tol: float = DEFAULT_TOL,
) -> Skeleton:
    """Simulate the tempered process; a bare position starts at ``beta = 0`` moving up."""
    rng = make_rng(rng_seed)
    if not isinstance(init, ExtendedState):
        init = initial_state(init, rng, beta=0.0, v_beta=1, mode=Mode.TEMPERING)
    _check_init(init, config)
    max_events, max_time = resolve_horizon(n_events, path_time)
    eta = exit_rate(config) if config.point_mass else 0.0
    target, base = config.path.target, config.path.base
    status, rec, props, acc, lam, lam_bar = _kernels.tempered_loop(
        target.params, base.params, target.hessian_row_sums, base.hessian_row_sums,
        0.5 * target.hessian_bound.sum(), 0.5 * base.hessian_bound.sum(),
        np.array(config.kappa.psi), eta, config.point_mass, 1.0,
        np.array(init.x, dtype=float), np.array(init.v, dtype=np.int8),
        float(init.beta), int(init.v_beta), int(init.mode), max_events, max_time, rng, tol,
    )
    return to_skeleton(status, rec, props, acc, dict(rate=lam, bound=lam_bar, eta=eta))


def run_fixed_beta(
    path: GeometricPath,
    beta: float,
    init: ExtendedState | np.ndarray,
    n_events: int | None = None,
    path_time: float | None = None,
    rng_seed=0,
    tol: float = DEFAULT_TOL,
) -> Skeleton:
    """Untempered Zig-Zag on ``q0^(1 - beta) q^beta`` for one fixed ``beta``.

    The skeleton is recorded in Untempered mode with ``beta`` kept in
    ``extras['beta']``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    rng = make_rng(rng_seed)
    if not isinstance(init, ExtendedState):
        init = initial_state(init, rng)
    if init.mode is not Mode.UNTEMPERED or init.dim != path.dim or np.any(init.v == 0):
        raise StateError("fixed-beta runs need an untempered state of the path dimension")
    max_events, max_time = resolve_horizon(n_events, path_time)
    rows = path.hessian_bound_at(beta).sum(axis=1)
    status, rec, props, acc, lam, lam_bar = _kernels.tempered_loop(
        path.target.params, path.base.params, rows, rows, 0.0, 0.0, np.zeros(1), 0.0, False,
        float(beta), np.array(init.x, dtype=float), np.array(init.v, dtype=np.int8),
        math.nan, 0, int(Mode.UNTEMPERED), max_events, max_time, rng, tol,
    )
    return to_skeleton(status, rec, props, acc, dict(rate=lam, bound=lam_bar, beta=float(beta)))


# -- kappa calibration ----------------------------------------------------------


def calibrate_kappa(beta_grid, ubar, degree: int = 4) -> LogKappa:
    """Fit ``log kappa = -log Z`` from estimates of ``E[log q - log q0 | beta]``.

    ``log Z`` is accumulated over the grid by the trapezoid rule (zero at the
    first grid point) and a degree-``degree`` polynomial is least-squares
    fitted to it; its coefficients are ``psi``.
    """
    grid = np.asarray(beta_grid, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    if grid.ndim != 1 or grid.shape != ubar.shape:
        raise CalibrationError("beta_grid and ubar must be vectors of equal length")
    if grid.size < 2:
        raise CalibrationError("need at least two grid points")
    if np.any(np.diff(grid) <= 0):
        raise CalibrationError("beta_grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > 1:
        raise CalibrationError("beta_grid must lie in [0, 1]")
    if degree < 0 or degree + 1 > grid.size:
        raise CalibrationError(f"degree {degree} needs at least {degree + 1} grid points")
    if not np.all(np.isfinite(ubar)):
        raise CalibrationError("ubar must be finite")
    log_z = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(grid) * (ubar[1:] + ubar[:-1]))])
    design = np.vander(grid, degree + 1, increasing=True)
    psi, _, rank, _ = np.linalg.lstsq(design, log_z, rcond=None)
    if rank < degree + 1:
        raise CalibrationError(f"regression is rank deficient (rank {rank} < {degree + 1})")
    return LogKappa(psi)


def _as_pairs(source, dt):
    if isinstance(source, Skeleton):
        if dt is None:
            dt = source.total_time / max(1000, 2 * len(source))
        source = discretize(source, dt)
    if isinstance(source, Samples):
        keep = np.isfinite(source.beta)
        return source.x[keep], source.beta[keep]
    x, beta = source
    return np.atleast_2d(np.asarray(x, dtype=float)), np.asarray(beta, dtype=float)


def estimate_ubar(source, path: GeometricPath, beta_grid, dt: float | None = None) -> np.ndarray:
    """Bin ``(x, beta)`` draws to the nearest grid point and average ``log q - log q0``.

    ``source`` is a tempered :class:`Skeleton` (evaluated every ``dt``), a
    :class:`Samples` record, or an ``(x, beta)`` pair of arrays.
    """
    grid = np.asarray(beta_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise CalibrationError("beta_grid must be strictly increasing")
    x, beta = _as_pairs(source, dt)
    mids = 0.5 * (grid[1:] + grid[:-1])
    bins = np.searchsorted(mids, beta)
    counts = np.bincount(bins, minlength=grid.size)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise CalibrationError(
            f"no samples near beta_grid[{empty[0]}] = {grid[empty[0]]} "
            f"({empty.size} empty bins in total)"
        )
    sums = np.bincount(bins, weights=path.log_ratio(x), minlength=grid.size)
    return sums / counts


def fixed_grid_ubar(
    path: GeometricPath,
    beta_grid,
    init,
    n_events: int,
    rng: np.random.Generator,
    burnin: float = 0.4,
    samples_per_run: int = 2000,
) -> np.ndarray:
    """Estimate ``E[log q - log q0 | beta]`` by a separate fixed-beta run per grid point.

    Each run starts from ``init`` and drops the first ``burnin`` fraction of
    its path time.
    """
    out = np.empty(len(beta_grid))
    for k, beta in enumerate(beta_grid):
        sk = run_fixed_beta(path, float(beta), init, n_events=n_events, rng_seed=rng)
        start = burnin * sk.total_time
        samples = discretize(sk, (sk.total_time - start) / samples_per_run, burnin=start)
        out[k] = path.log_ratio(samples.x).mean()
    return out


def boltzmann_recipe_grid(n: int = 15) -> np.ndarray:
    return np.linspace(0.01, 0.99, n)


# -- Gaussian paths in closed form ---------------------------------------------


def _gaussian_path_terms(target: GaussianSpec, base: GaussianSpec, beta: float):
    prec = np.linalg.inv(target.sigma)
    prec0 = np.linalg.inv(base.sigma)
    prec_b = beta * prec + (1.0 - beta) * prec0
    cov_b = np.linalg.inv(prec_b)
    mean_b = cov_b @ (beta * prec @ target.mu + (1.0 - beta) * prec0 @ base.mu)
    return prec, prec0, prec_b, cov_b, mean_b


def gaussian_path_log_normalizer(target: GaussianSpec, base: GaussianSpec, beta: float) -> float:
    """``log int q0^(1 - beta) q^beta dx`` for the unnormalized Gaussian kernels."""
    prec, prec0, prec_b, _, mean_b = _gaussian_path_terms(target, base, beta)
    d = target.mu.size
    quad = (
        beta * target.mu @ prec @ target.mu
        + (1.0 - beta) * base.mu @ prec0 @ base.mu
        - mean_b @ prec_b @ mean_b
    )
    _, logdet = np.linalg.slogdet(prec_b)
    return 0.5 * d * math.log(2.0 * math.pi) - 0.5 * logdet - 0.5 * quad


def gaussian_path_conditional(target: GaussianSpec, base: GaussianSpec, beta: float) -> GaussianSpec:
    """Normalized law of ``x`` given ``beta`` along a Gaussian path."""
    _, _, _, cov_b, mean_b = _gaussian_path_terms(target, base, beta)
    return GaussianSpec(mean_b, 0.5 * (cov_b + cov_b.T))


def gaussian_path_ubar(target: GaussianSpec, base: GaussianSpec, beta: float) -> float:
    """``E[log q - log q0 | beta]``, the derivative of the log-normalizer."""
    prec, prec0, _, cov_b, mean_b = _gaussian_path_terms(target, base, beta)
    r, r0 = mean_b - target.mu, mean_b - base.mu
    e_q = np.trace(prec @ cov_b) + r @ prec @ r
    e_q0 = np.trace(prec0 @ cov_b) + r0 @ prec0 @ r0
    return -0.5 * (e_q - e_q0)


def exact_gaussian_kappa(target: GaussianSpec, base: GaussianSpec, degree: int = 8,
                         n_grid: int = 201) -> LogKappa:
    """Polynomial fit of ``-log Z(beta)`` on a fine grid; exact when both share a covariance."""
    grid = np.linspace(0.0, 1.0, n_grid)
    log_z = np.array([gaussian_path_log_normalizer(target, base, b) for b in grid])
    psi = np.polynomial.polynomial.polyfit(grid, log_z, degree)
    return LogKappa(psi)
