"""Experiment configuration: one JSON document, overridden by command-line flags.

Precedence, lowest to highest: built-in defaults, the ``--config`` file,
explicit flags.  Unknown keys in the file are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .device import REFERENCE_TEMPERATURE, FlipModel
from .perf import EnergyConstants, TimingConstants
from .sampler import RunConfig
from .targets import TargetError, TargetPdf, flat_target, target_from_spec

SCHEMA_VERSION = 1

SWEEP_PARAMS = ("cvdd", "temperature", "p_bfr")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment parameters (exit status 2)."""


@dataclass
class ExperimentConfig:
    target: dict | str | None = None
    n_bits: int | None = None
    iterations: int = 2000
    burn_in: int = 1000
    compartments: int = 64
    seed: int = 0
    cvdd: float = 0.5
    temperature: float = REFERENCE_TEMPERATURE
    thin: int = 1
    workers: int = 1
    shared_u: bool = True
    stages: int = 3
    init_value: int | None = None
    p_bfr: float | None = None
    out: str = "out"
    plots: bool = True
    # rng-test / transfer-matrix
    draws: int = 100_000
    trials: int = 65_536
    # sweep
    sweep: dict = field(default_factory=dict)
    # constant overrides
    flip_model: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    base_dir: str | None = field(default=None, repr=False)

    @classmethod
    def load(cls, path=None, **overrides) -> "ExperimentConfig":
        """Defaults, then the JSON file at ``path``, then non-``None`` overrides."""
        cfg = cls()
        if path is not None:
            path = Path(path)
            try:
                data = json.loads(path.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be an object")
            cfg = cfg.merged(data)
            cfg.base_dir = str(path.parent)
        return cfg.merged({k: v for k, v in overrides.items() if v is not None})

    def merged(self, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(self)} - {"base_dir"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return replace(self, **data)

    def to_dict(self) -> dict:
        """Echo of the parameters that affect results (no output paths)."""
        d = asdict(self)
        for k in ("out", "plots", "base_dir", "workers"):
            d.pop(k)
        return d

    # -- derived objects -----------------------------------------------------

    def flip(self) -> FlipModel:
        try:
            model = FlipModel.from_dict(self.flip_model) if self.flip_model else FlipModel()
            if self.p_bfr is not None:
                model = replace(model, flip01=float(self.p_bfr), flip10=float(self.p_bfr))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"flip model: {exc}") from None
        return model

    def constants(self) -> tuple[EnergyConstants, TimingConstants]:
        try:
            return EnergyConstants(**self.energy), TimingConstants(**self.timing)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"constant overrides: {exc}") from None

    def build_target(self) -> TargetPdf:
        if self.target is None:
            return flat_target(self.n_bits or 4)
        try:
            return target_from_spec(self.target, self.n_bits, base_dir=self.base_dir)
        except (TargetError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"target: {exc}") from None

    def run_config(self, **kw) -> RunConfig:
        target = kw.pop("target", None) or self.build_target()
        energy, timing = self.constants()
        params = dict(
            n_bits=target.n_bits, iterations=self.iterations, burn_in=self.burn_in,
            compartments=self.compartments, seed=self.seed, cvdd=self.cvdd,
            temperature=self.temperature, target=target, thin=self.thin,
            shared_u=self.shared_u, init_value=self.init_value, workers=self.workers,
            stages=self.stages, flip_model=self.flip(), energy=energy, timing=timing,
        )
        params.update(kw)
        if self.n_bits is not None and self.n_bits != target.n_bits:
            raise ConfigError(f"target is {target.n_bits}-bit but --bits is {self.n_bits}")
        try:
            return RunConfig(**params).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sweep_points(self) -> tuple[str, list[float]]:
        """The swept parameter and its values; an empty range is an error."""
        sw = self.sweep
        param = sw.get("param")
        if param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep param must be one of {', '.join(SWEEP_PARAMS)}")
        if "values" in sw:
            values = [float(v) for v in sw["values"]]
        else:
            try:
                start, stop, step = (float(sw[k]) for k in ("start", "stop", "step"))
            except KeyError as exc:
                raise ConfigError(f"sweep needs start, stop and step (missing {exc})") from None
            if not step > 0 or stop < start or not all(map(math.isfinite, (start, stop, step))):
                values = []
            else:
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                values = [round(start + i * step, 12) for i in range(n)]
        if not values:
            raise ConfigError("sweep range is empty")
        return param, values
