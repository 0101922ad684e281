"""JSON run configuration: schema validation, defaults and model construction."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from jsonschema.exceptions import best_match

from .models import (
    PAPER_MIXTURE_MEANS,
    GaussianSpec,
    MixtureSpec,
    ModelError,
    TargetModel,
    boltzmann_base_spec,
    boltzmann_relaxation_model,
    build_Q,
    gaussian_model,
    mixture_model,
    random_boltzmann_machine,
)
from .sticky import SpikeSlabSpec
from .tempering import GeometricPath, LogKappa

DEFAULT_OUTPUTS = {"csv": "skeleton.csv", "summary": "summary.json", "kappa": "kappa.json"}
DEFAULT_CALIBRATION = {"method": "pilot", "grid_size": 21, "degree": 4, "grid_events": 2000}


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` locates the offending field."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.message = message
        self.pointer = pointer


def _schema() -> dict:
    text = resources.files("ctzigzag").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = jsonschema.Draft202012Validator(_schema())


def _pointer(parts) -> str:
    return "".join(f"/{p}" for p in parts)


@dataclass(frozen=True)
class RunConfig:
    model: dict
    base: dict | None = None
    alpha: float = 1.0
    kappa: dict = field(default_factory=lambda: {"psi": [0.0]})
    horizon: dict = field(default_factory=lambda: {"events": 50_000})
    burnin_fraction: float = 0.4
    seed: int = 0
    replicates: int = 1
    init: list | None = None
    refresh: bool = False
    is_samples: int = 20_000
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))

    @classmethod
    def parse(cls, doc: dict) -> RunConfig:
        error = best_match(_VALIDATOR.iter_errors(doc))
        if error is not None:
            raise ConfigError(error.message, _pointer(error.absolute_path))
        doc = json.loads(json.dumps(doc))
        if "kappa" in doc and "calibrate" in doc["kappa"]:
            doc["kappa"] = {"calibrate": {**DEFAULT_CALIBRATION, **doc["kappa"]["calibrate"]}}
        if "outputs" in doc:
            doc["outputs"] = {**DEFAULT_OUTPUTS, **doc["outputs"]}
        for key in ("alpha", "burnin_fraction"):
            if key in doc:
                doc[key] = float(doc[key])
        config = cls(**doc)
        config.check()
        return config

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @property
    def kappa_mode(self) -> str:
        return next(k for k in ("psi", "calibrate", "xi") if k in self.kappa)

    @property
    def is_sticky(self) -> bool:
        return self.model["type"] == "spikeslab"

    def check(self):
        """Cross-field checks the schema cannot express."""
        try:
            target = build_target(self)
        except (ModelError, ValueError) as exc:
            raise ConfigError(str(exc), "/model") from exc
        dim = target.d if self.is_sticky else target.dim
        if self.init is not None and len(self.init) != dim:
            raise ConfigError(f"init has length {len(self.init)}, model dimension is {dim}", "/init")
        if self.is_sticky:
            if self.base is not None:
                raise ConfigError("spike-and-slab tempering has a built-in path; omit base", "/base")
            if self.kappa_mode != "psi" or any(self.kappa["psi"]):
                raise ConfigError("spike-and-slab tempering uses a constant kappa", "/kappa")
            return
        if self.alpha < 1.0 and self.base is None:
            raise ConfigError("alpha < 1 needs a base distribution", "/base")
        if self.base is not None:
            try:
                base = build_base(self, target)
            except (ModelError, ValueError) as exc:
                raise ConfigError(str(exc), "/base") from exc
            if base.dim != dim:
                raise ConfigError(f"base dimension {base.dim} differs from model dimension {dim}", "/base")
        if self.kappa_mode == "xi" and self.alpha != 0.0:
            raise ConfigError("kappa given by xi is the importance-sampling regime; set alpha = 0", "/kappa")
        if self.alpha == 0.0 and self.kappa_mode == "psi":
            psi = self.kappa["psi"] + [0.0, 0.0]
            if any(psi[2:]) or (psi[1] != 0.0 and psi[0] != -psi[1]):
                raise ConfigError(
                    "alpha = 0 reweights draws and needs kappa proportional to xi^(1 - beta)",
                    "/kappa/psi",
                )
        if self.kappa_mode == "calibrate":
            cal = self.kappa["calibrate"]
            if cal["degree"] + 1 > cal["grid_size"]:
                raise ConfigError("calibration degree needs degree + 1 grid points", "/kappa/calibrate")
            if self.alpha == 1.0:
                raise ConfigError("alpha = 1 never leaves beta = 1; nothing to calibrate", "/kappa")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.parse(doc)


# -- construction -----------------------------------------------------------------


def _boltzmann_spec(model: dict):
    if "random" in model:
        r = model["random"]
        W, b = random_boltzmann_machine(
            r["d_b"], r.get("seed", 0), r.get("scale", 1.0), r.get("bias_scale", 0.2)
        )
    else:
        W, b = np.array(model["W"], dtype=float), np.array(model["b"], dtype=float)
    return build_Q(W, b, model.get("jitter", 0.1))


def build_target(config: RunConfig) -> TargetModel | SpikeSlabSpec:
    model = config.model
    kind = model["type"]
    if kind == "gaussian":
        return gaussian_model(GaussianSpec(np.array(model["mu"]), np.array(model["sigma"])))
    if kind == "mixture":
        means = np.array(model["means"]) if "means" in model else PAPER_MIXTURE_MEANS
        return mixture_model(MixtureSpec(means, model.get("sigma2", 0.2)))
    if kind == "boltzmann":
        return boltzmann_relaxation_model(_boltzmann_spec(model))
    return SpikeSlabSpec(
        d=model.get("d", 2), w=model.get("w", 0.5), m=model.get("m", 0.0),
        sigma2=model.get("sigma2", 0.5),
    )


def build_base(config: RunConfig, target: TargetModel) -> TargetModel:
    base = config.base
    if base is None:
        return target
    if base["type"] == "independent_spin":
        if config.model["type"] != "boltzmann":
            raise ModelError("the independent-spin base needs a Boltzmann model")
        return gaussian_model(boltzmann_base_spec(_boltzmann_spec(config.model)))
    return gaussian_model(GaussianSpec(np.array(base["mu"]), np.array(base["sigma"])))


def build_path(config: RunConfig) -> GeometricPath:
    target = build_target(config)
    return GeometricPath(build_base(config, target), target)


def base_spec(config: RunConfig) -> GaussianSpec | None:
    """Gaussian law of the base, used to draw starting points."""
    base = config.base
    if base is None:
        return None
    if base["type"] == "independent_spin":
        return boltzmann_base_spec(_boltzmann_spec(config.model))
    return GaussianSpec(np.array(base["mu"]), np.array(base["sigma"]))


def explicit_kappa(config: RunConfig) -> LogKappa | None:
    if config.kappa_mode == "psi":
        return LogKappa(np.array(config.kappa["psi"]), config.kappa.get("left_limit_ratio", 1.0))
    if config.kappa_mode == "xi":
        return LogKappa.from_xi(config.kappa["xi"])
    return None
