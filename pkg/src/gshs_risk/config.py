"""Experiment configuration: typed defaults, YAML loading and provenance.

Every field has a default.  :data:`PROVENANCE` marks each one as
``reported`` (a documented value of the reference scenario) or ``assumed``
(a value picked here to close a gap); ``print-defaults`` shows the mark
next to each value.
"""

from __future__ import annotations

import dataclasses
import enum
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .lane_change import ScenarioConfig, ellipse_ratios
from .ttc import RootPolicy
from .vehicle import VehicleParams

AWARENESS_SWEEP = (1.5825, 1.6275, 1.6725, 1.7, 1.7375)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 1.5e-3
    kd: float = 1.0e-2
    max_steer: float = 0.5


@dataclass(frozen=True)
class ScenarioSection:
    lane_width: float = 3.5
    er_start: tuple[float, float] = (0.0, 0.0)
    el_start: tuple[float, float] = (3.25, 7.0)
    lane_change_time_er: float = 0.0
    lane_change_time_el: float = 0.0
    mean_delay: float = 0.6
    ttc_threshold: float = 10.0
    settle_tolerance: float = 0.05
    ttc_order: int = 1
    ttc_policy: RootPolicy = RootPolicy.MIN_POSITIVE
    rear_end_tolerance_deg: float = 10.0
    same_lane_width: Optional[float] = None
    sample_interval: float = 0.01


@dataclass(frozen=True)
class LevelsConfig:
    first_ratio: float = 2.0
    decline: float = 0.2
    count: int = 6

    def ratios(self) -> tuple:
        return ellipse_ratios(self.first_ratio, self.decline, self.count)


@dataclass(frozen=True)
class EstimatorConfig:
    particles: int = 100
    trials: int = 100
    mc_runs: int = 100_000
    dt: float = 0.01
    horizon: float = 10.0
    redraw_budget: bool = True
    awareness_ratios: tuple[float, ...] = AWARENESS_SWEEP
    methods: tuple[str, ...] = ("ips", "mc")

    def __post_init__(self):
        if self.particles < 1 or self.trials < 1 or self.mc_runs < 1:
            raise ValueError("particles, trials and mc_runs must be positive")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if not self.awareness_ratios:
            raise ValueError("the awareness sweep is empty")
        bad = set(self.methods) - {"ips", "mc"}
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of ips, mc; got {sorted(bad)}")


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "results"
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ValueError(f"unknown output formats {sorted(bad)}")


@dataclass(frozen=True)
class ExperimentConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    levels: LevelsConfig = field(default_factory=LevelsConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 2024
    workers: int = 1

    def scenario_config(self, awareness_ratio: float) -> ScenarioConfig:
        s = self.scenario
        return ScenarioConfig(
            vehicle=self.vehicle, kp=self.controller.kp, kd=self.controller.kd,
            max_steer=self.controller.max_steer, lane_width=s.lane_width,
            er_start=tuple(s.er_start), el_start=tuple(s.el_start),
            lane_change_time_er=s.lane_change_time_er, lane_change_time_el=s.lane_change_time_el,
            awareness_ratio=awareness_ratio, mean_delay=s.mean_delay,
            ttc_threshold=s.ttc_threshold, settle_tolerance=s.settle_tolerance,
            ttc_order=s.ttc_order, ttc_policy=s.ttc_policy,
            rear_end_tolerance_deg=s.rear_end_tolerance_deg, same_lane_width=s.same_lane_width,
            sample_interval=s.sample_interval, horizon=self.estimator.horizon,
            radius_ratios=self.levels.ratios(),
        )

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"estimator.trials": 5}``."""
        data = to_dict(self)
        for path, value in changes.items():
            node = data
            *head, leaf = path.split(".")
            for part in head:
                node = node[part]
            node[leaf] = value
        return from_dict(data)


REPORTED = "reported"
ASSUMED = "assumed"

PROVENANCE: dict[str, str] = {
    **{f"vehicle.{f.name}": REPORTED for f in dataclasses.fields(VehicleParams)},
    "controller.kp": REPORTED,
    "controller.kd": REPORTED,
    "controller.max_steer": ASSUMED,
    "scenario.lane_width": REPORTED,
    "scenario.er_start": ASSUMED,
    "scenario.el_start": ASSUMED,
    "scenario.lane_change_time_er": ASSUMED,
    "scenario.lane_change_time_el": ASSUMED,
    "scenario.mean_delay": REPORTED,
    "scenario.ttc_threshold": REPORTED,
    "scenario.settle_tolerance": ASSUMED,
    "scenario.ttc_order": ASSUMED,
    "scenario.ttc_policy": ASSUMED,
    "scenario.rear_end_tolerance_deg": REPORTED,
    "scenario.same_lane_width": ASSUMED,
    "scenario.sample_interval": ASSUMED,
    "levels.first_ratio": REPORTED,
    "levels.decline": REPORTED,
    "levels.count": REPORTED,
    "estimator.particles": REPORTED,
    "estimator.trials": REPORTED,
    "estimator.mc_runs": ASSUMED,
    "estimator.dt": ASSUMED,
    "estimator.horizon": ASSUMED,
    "estimator.redraw_budget": ASSUMED,
    "estimator.awareness_ratios": REPORTED,
    "estimator.methods": ASSUMED,
    "output.out_dir": ASSUMED,
    "output.formats": ASSUMED,
    "seed": ASSUMED,
    "workers": ASSUMED,
}


# -- (de)serialization ----------------------------------------------------------

def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def to_dict(config: ExperimentConfig) -> dict:
    return _plain(config)


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in tp)
            raise ConfigError(f"{path}: {value!r} is not one of {choices}") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, data, path: str = ""):
    prefix = f"{path}." if path else ""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}: unknown field")
    kwargs = {k: _coerce(hints[k], v, prefix + k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def from_dict(data: Optional[dict]) -> ExperimentConfig:
    config = _build(ExperimentConfig, data or {})
    if config.workers < 1:
        raise ConfigError("workers: must be at least 1")
    if config.seed < 0:
        raise ConfigError("seed: must be nonnegative")
    try:
        for ratio in config.estimator.awareness_ratios:
            config.scenario_config(ratio)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None
    return config


def load_config(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: {path} is not valid YAML: {exc}") from None
    return from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def annotated_defaults(config: Optional[ExperimentConfig] = None) -> str:
    """YAML listing of ``config`` with a provenance comment on every leaf."""
    data = to_dict(config or ExperimentConfig())
    lines = []

    def emit(node, path, indent):
        for key, value in node.items():
            full = f"{path}.{key}" if path else key
            pad = "  " * indent
            if isinstance(value, dict):
                lines.append(f"{pad}{key}:")
                emit(value, full, indent + 1)
            else:
                rendered = yaml.safe_dump(value, default_flow_style=True).strip()
                if rendered.endswith("\n..."):
                    rendered = rendered[:-4].strip()
                rendered = rendered.removesuffix("...").strip()
                lines.append(f"{pad}{key}: {rendered}  # {PROVENANCE.get(full, ASSUMED)}")

    emit(data, "", 0)
    return "\n".join(lines) + "\n"


def provenance_block() -> dict:
    return dict(PROVENANCE)
