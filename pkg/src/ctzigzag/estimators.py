"""Estimates from skeletons: exact segment integrals, occupancies and IS reweighting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .state import EventKind, Mode, Skeleton
from .tempering import GeometricPath


class EstimationError(ValueError):
    pass


def burnin_time(skeleton: Skeleton, fraction: float) -> float:
    """Path time at which the first ``fraction`` of events has elapsed."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("burn-in fraction must lie in [0, 1)")
    k = int(math.floor(fraction * skeleton.n_events))
    return float(skeleton.t[k])


def _segments(skeleton: Skeleton, mode, burnin: float):
    """Start states and durations of the filtered segments after ``burnin``."""
    if burnin < 0:
        raise ValueError("burn-in must be non-negative")
    t0 = skeleton.t[:-1]
    t1 = skeleton.t[1:]
    start = np.maximum(t0, burnin)
    h = np.clip(t1 - start, 0.0, None)
    shift = start - t0
    keep = h > 0
    if mode is not None:
        modes = [int(mode)] if isinstance(mode, (int, Mode)) else [int(m) for m in mode]
        keep &= np.isin(skeleton.mode[:-1], modes)
    vel = skeleton.effective_velocity[:-1][keep]
    x = skeleton.x[:-1][keep] + shift[keep, None] * vel
    return x, vel, h[keep], keep


def filtered_time(skeleton: Skeleton, mode=None, burnin: float = 0.0) -> float:
    return float(_segments(skeleton, mode, burnin)[2].sum())


def segment_moments(skeleton: Skeleton, power: int, mode=None, burnin: float = 0.0) -> np.ndarray:
    """Time average of ``x_i(t)^power`` for every coordinate, integrating each linear piece exactly.

    ``mode`` restricts the average to segments in the given mode(s);
    ``burnin`` is a path time.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    x, v, h, _ = _segments(skeleton, mode, burnin)
    total = h.sum()
    if not total > 0:
        raise EstimationError("no path time left after filtering and burn-in")
    hc = h[:, None]
    if power == 1:
        integral = x * hc + 0.5 * v * hc**2
    else:
        integral = x**2 * hc + x * v * hc**2 + v**2 * hc**3 / 3.0
    return integral.sum(axis=0) / total


def segment_moment(skeleton: Skeleton, i: int, power: int, mode=None, burnin: float = 0.0) -> float:
    return float(segment_moments(skeleton, power, mode, burnin)[i])


def beta_occupancy(skeleton: Skeleton, burnin: float = 0.0) -> float:
    """Fraction of path time spent in Target mode."""
    total = filtered_time(skeleton, None, burnin)
    if not total > 0:
        raise EstimationError("no path time left after burn-in")
    return filtered_time(skeleton, Mode.TARGET, burnin) / total


def beta_interval_occupancy(skeleton: Skeleton, lo: float, hi: float, burnin: float = 0.0) -> float:
    """Fraction of path time spent in Tempering mode with ``lo <= beta <= hi``."""
    total = filtered_time(skeleton, None, burnin)
    if not total > 0:
        raise EstimationError("no path time left after burn-in")
    _, _, h, keep = _segments(skeleton, Mode.TEMPERING, burnin)
    t0 = np.maximum(skeleton.t[:-1][keep], burnin)
    b0 = skeleton.beta[:-1][keep] + (t0 - skeleton.t[:-1][keep]) * skeleton.v_beta[:-1][keep]
    b1 = b0 + h * skeleton.v_beta[:-1][keep]
    overlap = np.minimum(np.maximum(b0, b1), hi) - np.maximum(np.minimum(b0, b1), lo)
    return float(np.clip(overlap, 0.0, None).sum() / total)


def inclusion_probability(skeleton: Skeleton, mode=Mode.TARGET, burnin: float = 0.0) -> np.ndarray:
    """Per-coordinate fraction of filtered time spent away from the spike at zero."""
    _, _, h, keep = _segments(skeleton, mode, burnin)
    total = h.sum()
    if not total > 0:
        raise EstimationError("no path time left after filtering and burn-in")
    active = ~skeleton.stuck[:-1][keep]
    return (h[:, None] * active).sum(axis=0) / total


def target_segment_durations(skeleton: Skeleton) -> np.ndarray:
    """Lengths of completed visits to the atom, from HitBetaOne to ExitBetaOne."""
    hits = skeleton.t[skeleton.kind == EventKind.HIT_BETA_ONE]
    exits = skeleton.t[skeleton.kind == EventKind.EXIT_BETA_ONE]
    if skeleton.mode[0] == Mode.TARGET:
        hits = np.concatenate([[0.0], hits])
    n = min(hits.size, exits.size)
    return exits[:n] - hits[:n]


# -- importance sampling ----------------------------------------------------------


def is_weight(delta):
    """``delta / (exp(delta) - 1)``, equal to 1 at ``delta = 0``."""
    d = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("delta must be finite")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        w = np.where(d == 0.0, 1.0, d / np.expm1(np.where(d == 0.0, 1.0, d)))
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class ISResult:
    estimate: float
    standard_error: float
    ess: float
    n: int


def is_estimate(
    x,
    path: GeometricPath,
    xi: float,
    f: Callable[[np.ndarray], np.ndarray],
    n_batches: int = 50,
) -> ISResult:
    """Self-normalized reweighting of ``beta < 1`` draws towards the target.

    ``f`` maps the ``(n, d)`` array of draws to ``n`` values. The standard
    error comes from batch means over contiguous blocks, so it accounts for
    the autocorrelation of draws taken along one path.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise EstimationError("no samples to reweight")
    if not xi > 0:
        raise ValueError("xi must be positive")
    delta = path.base.log_density_rows(x) + math.log(xi) - path.target.log_density_rows(x)
    w = is_weight(delta)
    total = w.sum()
    if not total > 0:
        raise EstimationError("importance weights sum to zero")
    fx = np.asarray(f(x), dtype=float).reshape(n)
    est = float(w @ fx / total)
    n_batches = max(1, min(n_batches, n))
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    num = np.add.reduceat(w * fx, edges[:-1])
    den = np.add.reduceat(w, edges[:-1])
    resid = num - est * den
    se = math.sqrt(n_batches / max(n_batches - 1, 1) * float(resid @ resid)) / total
    return ISResult(est, float(se), float(total**2 / (w @ w)), n)


# -- replicate aggregation ----------------------------------------------------------


def _errors(estimates, exact) -> np.ndarray:
    if exact is None:
        raise EstimationError("exact moments are required")
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if est.shape[0] < 1:
        raise EstimationError("need at least one replicate")
    return est - np.asarray(exact, dtype=float)


def rmse_report(estimates, exact) -> np.ndarray:
    """Root-mean-square error over replicates (rows) for each moment (column)."""
    return np.sqrt(np.mean(_errors(estimates, exact) ** 2, axis=0))


def mae_report(estimates, exact) -> np.ndarray:
    return np.mean(np.abs(_errors(estimates, exact)), axis=0)


def batch_means_se(values: Iterable[float], n_batches: int = 20) -> float:
    """Standard error of the mean of a correlated sequence from contiguous batch means."""
    v = np.asarray(list(values), dtype=float)
    n_batches = min(n_batches, v.size)
    if n_batches < 2:
        raise EstimationError("need at least two values")
    means = np.array([b.mean() for b in np.array_split(v, n_batches)])
    return float(means.std(ddof=1) / math.sqrt(n_batches))
