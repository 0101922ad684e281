"""Executing run configurations: replicate seeds, single replicates and output files."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import config as cfg
from .estimators import (
    beta_occupancy,
    burnin_time,
    inclusion_probability,
    is_estimate,
    segment_moments,
)
from .state import EventKind, ExtendedState, Mode, Skeleton
from .sticky import run_sticky_tempered
from .tempering import (
    LogKappa,
    TemperingConfig,
    boltzmann_recipe_grid,
    calibrate_kappa,
    estimate_ubar,
    fixed_grid_ubar,
    run_tempered_zigzag,
)
from .zigzag import discretize, initial_state


def replicate_seed(base_seed: int, *key: int) -> int:
    """64-bit seed for replicate ``key`` derived from ``base_seed`` by SeedSequence hashing."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def mean_or_none(values) -> float | None:
    """Mean of the non-missing values, or ``None`` when every value is missing."""
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None


def map_replicates(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Apply ``fn`` to every item, in order, optionally on a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- skeleton CSV -------------------------------------------------------------------

_MODE_NAMES = {int(m): m.name.capitalize() for m in Mode}
_MODE_CODES = {v: k for k, v in _MODE_NAMES.items()}


def _fmt(value: float) -> str:
    return "%.17g" % value


def _event_label(kind: int, index: int) -> str:
    kind = EventKind(kind)
    if kind in (EventKind.FLIP_X, EventKind.STICK, EventKind.UNSTICK):
        return f"{kind.label}({index})"
    return kind.label


def write_skeleton_csv(skeleton: Skeleton, path) -> None:
    d = skeleton.dim
    header = ["t", "mode", "beta", "v_beta"]
    header += [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
    header += ["event_kind"]
    sticky = bool(skeleton.stuck.any())
    if sticky:
        header += [f"stuck_{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(skeleton)):
            row = [_fmt(skeleton.t[k]), _MODE_NAMES[int(skeleton.mode[k])],
                   _fmt(skeleton.beta[k]), str(int(skeleton.v_beta[k]))]
            row += [_fmt(x) for x in skeleton.x[k]]
            row += [str(int(v)) for v in skeleton.v[k]]
            row.append(_event_label(int(skeleton.kind[k]), int(skeleton.index[k])))
            if sticky:
                row += ["1" if s else "0" for s in skeleton.stuck[k]]
            writer.writerow(row)


def read_skeleton_csv(path) -> Skeleton:
    """Inverse of :func:`write_skeleton_csv`; counts and extras are not stored."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x_"))
    labels = {kind.label: kind for kind in EventKind}
    kinds, index = [], []
    for r in body:
        name, _, rest = r[4 + 2 * d].partition("(")
        kinds.append(int(labels[name]))
        index.append(int(rest.rstrip(")")) if rest else -1)
    stuck = (
        np.array([[c == "1" for c in r[5 + 2 * d: 5 + 3 * d]] for r in body])
        if len(header) > 5 + 2 * d
        else np.zeros((len(body), d), dtype=bool)
    )
    return Skeleton(
        t=np.array([float(r[0]) for r in body]),
        kind=np.array(kinds, dtype=np.int8),
        index=np.array(index, dtype=np.int32),
        x=np.array([[float(c) for c in r[4:4 + d]] for r in body]).reshape(len(body), d),
        v=np.array([[int(c) for c in r[4 + d:4 + 2 * d]] for r in body], dtype=np.int8),
        beta=np.array([float(r[2]) for r in body]),
        v_beta=np.array([int(r[3]) for r in body], dtype=np.int8),
        mode=np.array([_MODE_CODES[r[1]] for r in body], dtype=np.int8),
        stuck=stuck,
    )


def _strict(obj):
    # JSON has no NaN or infinity; such values are reported as missing
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _strict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strict(v) for v in obj]
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_strict(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


# -- one replicate ------------------------------------------------------------------


@dataclass
class ReplicateResult:
    seed: int
    skeleton: Skeleton
    summary: dict
    kappa: dict | None = None


def _split_horizon(horizon: dict, fraction: float) -> tuple[dict, dict]:
    if "events" in horizon:
        first = int(math.floor(fraction * horizon["events"]))
        return {"events": first}, {"events": horizon["events"] - first}
    first = fraction * horizon["path_time"]
    return {"path_time": first}, {"path_time": horizon["path_time"] - first}


def _horizon_kw(horizon: dict) -> dict:
    if "events" in horizon:
        return {"n_events": horizon["events"]}
    return {"path_time": horizon["path_time"]}


def start_position(config: cfg.RunConfig, target, rng: np.random.Generator) -> np.ndarray:
    if config.init is not None:
        return np.array(config.init, dtype=float)
    spec = cfg.base_spec(config)
    if spec is not None:
        return rng.multivariate_normal(spec.mu, spec.sigma)
    if config.is_sticky:
        return np.zeros(target.d)
    return np.zeros(target.dim)


def calibrate(config: cfg.RunConfig, path, x0, rng) -> tuple[LogKappa, dict, ExtendedState | None]:
    """Fit kappa by the configured recipe; also returns the pilot's final state, if any."""
    settings = config.kappa.get("calibrate", cfg.DEFAULT_CALIBRATION)
    if settings["method"] == "grid":
        grid = boltzmann_recipe_grid(settings["grid_size"])
        ubar = fixed_grid_ubar(path, grid, x0, settings["grid_events"], rng)
        end = None
    else:
        pilot_horizon, _ = _split_horizon(config.horizon, config.burnin_fraction)
        pilot = run_tempered_zigzag(
            TemperingConfig(0.0, LogKappa.constant(), path), x0,
            rng_seed=rng, **_horizon_kw(pilot_horizon),
        )
        grid = np.linspace(0.0, 1.0, settings["grid_size"])
        ubar = estimate_ubar(pilot, path, grid)
        end = pilot.final_state()
    kappa = calibrate_kappa(grid, ubar, settings["degree"])
    record = dict(
        method=settings["method"], degree=settings["degree"], grid=grid.tolist(),
        ubar=ubar.tolist(), psi=kappa.psi.tolist(), left_limit_ratio=1.0,
    )
    return kappa, record, end


def _xi_from_fit(kappa: LogKappa) -> float:
    """``xi`` with ``xi^(1 - beta)`` matching the fitted kappa at both ends."""
    return math.exp(kappa.log_value(0.0) - kappa.log_value(1.0))


def xi_of(kappa: LogKappa) -> float:
    """The ``xi`` of a kappa proportional to ``xi^(1 - beta)``."""
    psi = kappa.psi
    if psi.size == 1 or not np.any(psi[1:]):
        return 1.0
    if psi.size > 2 and np.any(psi[2:]) or not math.isclose(psi[0], -psi[1], rel_tol=1e-12):
        raise ValueError("importance weights need kappa proportional to xi^(1 - beta)")
    return math.exp(psi[1])


def _moment_summary(first, second, exact) -> dict:
    out = {"mean": np.asarray(first).tolist(), "second_moment": np.asarray(second).tolist()}
    if exact is not None:
        out["exact_mean"] = np.asarray(exact[0]).tolist()
        out["exact_second_moment"] = np.asarray(exact[1]).tolist()
    return out


def run_replicate(config: cfg.RunConfig, seed: int) -> ReplicateResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    target = cfg.build_target(config)
    x0 = start_position(config, target, rng)
    summary = dict(seed=int(seed), alpha=config.alpha)
    kappa_record = None

    if config.is_sticky:
        sk = run_sticky_tempered(
            target, config.alpha, x0, rng_seed=rng, refresh=config.refresh,
            **_horizon_kw(config.horizon),
        )
        burn = burnin_time(sk, config.burnin_fraction)
        if config.alpha > 0:
            summary["estimates"] = _moment_summary(
                segment_moments(sk, 1, Mode.TARGET, burn),
                segment_moments(sk, 2, Mode.TARGET, burn),
                target.exact_moments,
            )
            summary["inclusion_probability"] = inclusion_probability(sk, Mode.TARGET, burn).tolist()
        summary["exact_inclusion_probability"] = target.inclusion_probability
    else:
        path = cfg.build_path(config)
        kappa = cfg.explicit_kappa(config)
        horizon = config.horizon
        burn_fraction = config.burnin_fraction
        start: ExtendedState | np.ndarray = x0
        if kappa is None:
            kappa, kappa_record, pilot_end = calibrate(config, path, x0, rng)
            if pilot_end is not None:
                _, horizon = _split_horizon(config.horizon, config.burnin_fraction)
                burn_fraction = 0.0
                start = pilot_end
            if config.alpha == 0.0:
                xi = _xi_from_fit(kappa)
                kappa = LogKappa.from_xi(xi)
                kappa_record["xi"] = xi
        if config.alpha == 1.0 and not isinstance(start, ExtendedState):
            start = initial_state(start, rng, beta=1.0, v_beta=0, mode=Mode.TARGET)
        tempering = TemperingConfig(config.alpha, kappa, path)
        sk = run_tempered_zigzag(tempering, start, rng_seed=rng, **_horizon_kw(horizon))
        burn = burnin_time(sk, burn_fraction)
        if config.alpha > 0:
            summary["estimates"] = _moment_summary(
                segment_moments(sk, 1, Mode.TARGET, burn),
                segment_moments(sk, 2, Mode.TARGET, burn),
                target.exact_moments,
            )
        else:
            xi = xi_of(kappa)
            samples = discretize(sk, (sk.total_time - burn) / config.is_samples, burnin=burn)
            first, second = [], []
            for i in range(path.dim):
                first.append(is_estimate(samples.x, path, xi, lambda x, i=i: x[:, i]))
                second.append(is_estimate(samples.x, path, xi, lambda x, i=i: x[:, i] ** 2))
            summary["estimates"] = _moment_summary(
                [r.estimate for r in first], [r.estimate for r in second], target.exact_moments
            )
            summary["estimates"]["standard_error"] = [r.standard_error for r in first]
            summary["estimates"]["second_moment_standard_error"] = [r.standard_error for r in second]
            summary["estimates"]["ess"] = first[0].ess
            summary["xi"] = xi
        summary["kappa_psi"] = kappa.psi.tolist()

    summary.update(
        n_events=sk.n_events,
        total_time=sk.total_time,
        burnin_time=burn,
        occupancy=beta_occupancy(sk, burn),
        proposal_count=sk.proposal_count,
        accepted_count=sk.accepted_count,
        thinning_efficiency=None if sk.proposal_count == 0 else sk.thinning_efficiency,
    )
    if kappa_record is not None:
        summary["calibration"] = kappa_record
    summary["wall_time"] = time.perf_counter() - started
    return ReplicateResult(int(seed), sk, summary, kappa_record)


def run_config(config: cfg.RunConfig, threads: int = 1) -> list[ReplicateResult]:
    seeds = [replicate_seed(config.seed, r) for r in range(config.replicates)]
    return map_replicates(lambda s: run_replicate(config, s), seeds, threads)


def with_seed(config: cfg.RunConfig, seed: int | None, replicates: int | None) -> cfg.RunConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if replicates is not None:
        changes["replicates"] = replicates
    return replace(config, **changes) if changes else config
