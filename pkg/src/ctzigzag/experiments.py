"""Replicate studies for the mixture, spike-and-slab and Boltzmann benchmarks."""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig
from .estimators import mae_report, rmse_report
from .harness import map_replicates, mean_or_none, replicate_seed, run_replicate


@dataclass(frozen=True)
class MixtureExperiment:
    """Five-mode mixture in two dimensions against a broad Gaussian base."""

    alphas: tuple = (1.0, 0.3)
    replicates: int = 20
    n_events: int = 50_000
    burnin_fraction: float = 0.4
    sigma2: float = 0.2
    base_mean: tuple = (5.0, 5.0)
    base_variance: float = 2.0
    grid_size: int = 21
    degree: int = 4
    seed: int = 2024

    def rows(self) -> list[tuple[dict, RunConfig]]:
        out = []
        for alpha in self.alphas:
            kappa = (
                {"psi": [0.0]} if alpha == 1.0
                else {"calibrate": {"method": "pilot", "grid_size": self.grid_size,
                                    "degree": self.degree}}
            )
            doc = dict(
                model={"type": "mixture", "sigma2": self.sigma2},
                base={"type": "gaussian", "mu": list(self.base_mean),
                      "sigma": (self.base_variance * np.eye(2)).tolist()},
                alpha=alpha, kappa=kappa, horizon={"events": self.n_events},
                burnin_fraction=self.burnin_fraction,
            )
            out.append(({"alpha": alpha}, RunConfig.parse(doc)))
        return out

    def aggregate(self, summaries: list[dict]) -> dict:
        est = np.array([s["estimates"]["mean"] + s["estimates"]["second_moment"] for s in summaries])
        exact = summaries[0]["estimates"]
        truth = exact["exact_mean"] + exact["exact_second_moment"]
        names = ["E[X1]", "E[X2]", "E[X1^2]", "E[X2^2]"]
        return {"rmse": dict(zip(names, rmse_report(est, truth).tolist()))}


@dataclass(frozen=True)
class SpikeSlabExperiment:
    """Two-coordinate spike-and-slab over a grid of slab separations."""

    ms: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    alphas: tuple = (1.0, 0.5)
    replicates: int = 10
    n_events: int = 200_000
    burnin_fraction: float = 0.4
    d: int = 2
    w: float = 0.5
    sigma2: float = 0.5
    seed: int = 2024

    def rows(self) -> list[tuple[dict, RunConfig]]:
        out = []
        for m in self.ms:
            for alpha in self.alphas:
                doc = dict(
                    model={"type": "spikeslab", "d": self.d, "w": self.w, "m": m,
                           "sigma2": self.sigma2},
                    alpha=alpha, horizon={"events": self.n_events},
                    burnin_fraction=self.burnin_fraction,
                )
                out.append(({"m": m, "alpha": alpha}, RunConfig.parse(doc)))
        return out

    def aggregate(self, summaries: list[dict]) -> dict:
        inc = np.array([s["inclusion_probability"] for s in summaries])
        means = np.array([s["estimates"]["mean"] for s in summaries])
        exact_mean = summaries[0]["estimates"]["exact_mean"]
        return {
            "mae_inclusion": mae_report(inc, np.full(inc.shape[1], self.w)).tolist(),
            "mae_mean": mae_report(means, exact_mean).tolist(),
        }


@dataclass(frozen=True)
class BoltzmannExperiment:
    """Seeded Boltzmann machine relaxation small enough to enumerate."""

    alphas: tuple = (1.0, 0.2)
    replicates: int = 10
    n_events: int = 50_000
    burnin_fraction: float = 0.4
    d_b: int = 8
    coupling_scale: float = 3.0
    bias_scale: float = 0.2
    machine_seed: int = 0
    grid_size: int = 15
    grid_events: int = 2_000
    degree: int = 4
    seed: int = 2024

    def rows(self) -> list[tuple[dict, RunConfig]]:
        model = {"type": "boltzmann", "random": {
            "d_b": self.d_b, "seed": self.machine_seed, "scale": self.coupling_scale,
            "bias_scale": self.bias_scale,
        }}
        out = []
        for alpha in self.alphas:
            kappa = (
                {"psi": [0.0]} if alpha == 1.0
                else {"calibrate": {"method": "grid", "grid_size": self.grid_size,
                                    "degree": self.degree, "grid_events": self.grid_events}}
            )
            doc = dict(
                model=model, base={"type": "independent_spin"}, alpha=alpha, kappa=kappa,
                horizon={"events": self.n_events}, burnin_fraction=self.burnin_fraction,
            )
            out.append(({"alpha": alpha}, RunConfig.parse(doc)))
        return out

    def aggregate(self, summaries: list[dict]) -> dict:
        first = np.array([s["estimates"]["mean"] for s in summaries])
        second = np.array([s["estimates"]["second_moment"] for s in summaries])
        exact = summaries[0]["estimates"]
        rmse_first = rmse_report(first, exact["exact_mean"])
        rmse_second = rmse_report(second, exact["exact_second_moment"])
        return {
            "average_rmse_first": float(rmse_first.mean()),
            "average_rmse_second": float(rmse_second.mean()),
            "average_rmse": float(np.concatenate([rmse_first, rmse_second]).mean()),
        }


EXPERIMENTS = {
    "mixture": MixtureExperiment,
    "spikeslab": SpikeSlabExperiment,
    "boltzmann": BoltzmannExperiment,
}


def make_experiment(name: str, overrides: dict | None = None):
    """Experiment settings with ``overrides`` applied field by field."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    cls = EXPERIMENTS[name]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    changes = {}
    for key, value in (overrides or {}).items():
        if key not in fields:
            raise ConfigError(f"unknown setting {key!r}", f"/{key}")
        default = fields[key].default
        if isinstance(default, tuple):
            if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
                raise ConfigError("expected a list of numbers", f"/{key}")
            value = tuple(float(v) for v in value)
        elif isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("expected an integer", f"/{key}")
        elif isinstance(default, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError("expected a number", f"/{key}")
            value = float(value)
        changes[key] = value
    return cls(**changes)


def _replicate_job(job):
    row, r, config, seed = job
    try:
        result = run_replicate(config, seed)
        return row, r, result.summary
    except Exception as exc:  # flagged in the report rather than aborting the study
        return row, r, {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class StudyReport:
    name: str
    settings: dict
    rows: list[dict] = field(default_factory=list)
    replicates: list[list[dict]] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_experiment(experiment, threads: int = 1) -> StudyReport:
    started = time.perf_counter()
    rows = experiment.rows()
    jobs = [
        (k, r, config, replicate_seed(experiment.seed, k, r))
        for k, (_, config) in enumerate(rows)
        for r in range(experiment.replicates)
    ]
    results = map_replicates(_replicate_job, jobs, threads)
    by_row: list[list[dict]] = [[] for _ in rows]
    for k, r, summary in results:
        by_row[k].append(summary)
    name = next(key for key, cls in EXPERIMENTS.items() if isinstance(experiment, cls))
    report = StudyReport(name, dataclasses.asdict(experiment))
    for (labels, _), summaries in zip(rows, by_row):
        ok = [s for s in summaries if "error" not in s]
        row = dict(labels, replicates=len(ok), failed=len(summaries) - len(ok))
        if ok:
            row["occupancy"] = float(np.mean([s["occupancy"] for s in ok]))
            row["thinning_efficiency"] = mean_or_none(s["thinning_efficiency"] for s in ok)
            row.update(experiment.aggregate(ok))
        report.rows.append(row)
        report.replicates.append(summaries)
    report.wall_time = time.perf_counter() - started
    return report


def _flatten(row: dict) -> dict:
    flat = {}
    for key, value in row.items():
        if isinstance(value, dict):
            flat.update({f"{key}:{k}": v for k, v in value.items()})
        elif isinstance(value, list):
            flat.update({f"{key}:{i + 1}": v for i, v in enumerate(value)})
        else:
            flat[key] = value
    return flat


def write_report_csv(report: StudyReport, path) -> None:
    flat = [_flatten(row) for row in report.rows]
    columns = list(dict.fromkeys(k for row in flat for k in row))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, columns, lineterminator="\n")
        writer.writeheader()
        for row in flat:
            writer.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in row.items()})
