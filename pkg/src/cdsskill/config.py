"""Pipeline configuration: one JSON/YAML file, environment overrides, strict keys.

Layout (every key optional, defaults shown by ``cdsskill config``)::

    seed: 0
    paths:     {skeleton, depth_dir}
    ingest:    side, subjects, conf_min, max_gap, smooth_window, samples_per_demo,
               demo_period_s, depth_window, fx, fy, cx, cy, width, height, rate
    stiffness: alpha1, alpha2, a_cc
    gmm:       k_components, select_k, k_range, tol, max_iter, reg, k_max_stiffness
    planner:   stroke_length_m, period_s, axis, z_height_m, goal_offset_m, loop_sharpness
    sim:       dt, duration_s, error_bound_m, k_floor, phase_offset_s, mass, damping_ratio,
               k_x, k_y, k_z, k_min, k_max, f_ff, k_couple, c_couple, rest_length, mu,
               k_wood, c_wood, wood_top_z, v_eps, cut_rate, cut_threshold, binding
    synth:     amplitude, period, n_cycles, noise_std, phase_offset, rate, ...

Environment variables ``CDSSKILL_<SECTION>__<KEY>`` (or ``CDSSKILL_SEED``)
override file values; values are parsed as JSON when possible.
"""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import CdsError, ConfigError
from .planner import PlannerConfig
from .synth import SyntheticDemoSpec

ENV_PREFIX = "CDSSKILL_"


@dataclass
class PathsSection:
    skeleton: str | None = None
    depth_dir: str | None = None


@dataclass
class IngestSection:
    side: str = "right"
    subjects: list = field(default_factory=lambda: ["A", "B"])
    conf_min: float = 0.3
    max_gap: int = 5
    smooth_window: int = 5
    samples_per_demo: int = 80
    demo_period_s: float = 4.0  # 0 keeps each recording as one demonstration
    depth_window: int = 5
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    rate: float = 20.0


@dataclass
class StiffnessSection:
    alpha1: float = 0.4
    alpha2: float = 5.0
    a_cc: float = 1.0


@dataclass
class GmmSection:
    k_components: int = 5
    select_k: bool = False
    k_range: list = field(default_factory=lambda: [2, 10])
    tol: float = 1e-6
    max_iter: int = 300
    reg: float = 1e-6
    k_max_stiffness: float = 800.0


@dataclass
class SimSection:
    dt: float = 1e-3
    duration_s: float = 20.0
    error_bound_m: float = 0.15
    k_floor: float = 10.0
    phase_offset_s: float = 0.0
    mass: float = 5.0
    damping_ratio: float = 1.0
    k_x: float = 0.0
    k_y: float = 800.0
    k_z: float = 800.0
    k_min: float = 0.0
    k_max: float = 800.0
    f_ff: list = field(default_factory=lambda: [0.0, 0.0, -10.0])
    k_couple: float = 1e5
    c_couple: float = 200.0
    rest_length: float = 0.8
    mu: float = 0.8
    k_wood: float = 1e5
    c_wood: float = 500.0
    wood_top_z: float = 0.0
    v_eps: float = 1e-3
    cut_rate: float = 2e-3
    cut_threshold: float = 10.0
    binding: float = 0.5


SECTIONS = {
    "paths": PathsSection,
    "ingest": IngestSection,
    "stiffness": StiffnessSection,
    "gmm": GmmSection,
    "planner": PlannerConfig,
    "sim": SimSection,
    "synth": SyntheticDemoSpec,
}


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsSection = field(default_factory=PathsSection)
    ingest: IngestSection = field(default_factory=IngestSection)
    stiffness: StiffnessSection = field(default_factory=StiffnessSection)
    gmm: GmmSection = field(default_factory=GmmSection)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimSection = field(default_factory=SimSection)
    synth: SyntheticDemoSpec = field(default_factory=SyntheticDemoSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    def stage_seed(self, stage: str) -> int:
        """Independent, reproducible seed per pipeline stage."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(stage.encode())])
        return int(ss.generate_state(1)[0])


def _coerce(value, default, where):
    if isinstance(value, str) and isinstance(default, (int, float)) and not isinstance(default, bool):
        try:
            value = float(value)  # YAML 1.1 reads "1e-3" as a string
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, (int, float)) and float(value).is_integer() and not isinstance(value, bool):
            return int(value)
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    if default is None or isinstance(default, str):
        if value is None or isinstance(value, str):
            return value
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build_section(name, cls, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    defaults = cls()
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    kw = {k: _coerce(v, getattr(defaults, k), f"{name}.{k}") for k, v in values.items()}
    try:
        return cls(**kw)
    except (ValueError, TypeError, CdsError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from None


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        rest = key[len(ENV_PREFIX):].lower()
        if rest == "seed":
            out["seed"] = _parse_env_value(raw)
            continue
        if "__" not in rest:
            raise ConfigError(f"environment override {key} must look like {ENV_PREFIX}<SECTION>__<KEY>")
        section, name = rest.split("__", 1)
        out.setdefault(section, {})[name] = _parse_env_value(raw)
    return out


def merge(base: dict, over: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(raw) - set(SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kw = {name: _build_section(name, cls, raw.get(name, {})) for name, cls in SECTIONS.items()}
    seed = _coerce(raw.get("seed", 0), 0, "seed")
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    cfg = PipelineConfig(seed=seed, **kw)
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    ing, sim, g = cfg.ingest, cfg.sim, cfg.gmm
    checks = [
        (ing.side in ("left", "right"), "ingest.side must be 'left' or 'right'"),
        (len(ing.subjects) >= 1, "ingest.subjects must list at least one subject"),
        (0.0 <= ing.conf_min <= 1.0, "ingest.conf_min must lie in [0, 1]"),
        (ing.max_gap >= 0, "ingest.max_gap must be >= 0"),
        (ing.smooth_window >= 1 and ing.smooth_window % 2 == 1, "ingest.smooth_window must be odd and >= 1"),
        (ing.samples_per_demo >= 2, "ingest.samples_per_demo must be >= 2"),
        (ing.demo_period_s >= 0, "ingest.demo_period_s must be >= 0"),
        (cfg.stiffness.alpha1 > 0 and cfg.stiffness.alpha2 > 0 and cfg.stiffness.a_cc > 0,
         "stiffness parameters must be positive"),
        (g.k_components >= 1, "gmm.k_components must be >= 1"),
        (len(g.k_range) == 2 and 1 <= g.k_range[0] <= g.k_range[1], "gmm.k_range must be [k_lo, k_hi]"),
        (g.tol > 0 and g.max_iter >= 1 and g.reg >= 0 and g.k_max_stiffness > 0, "invalid gmm settings"),
        (sim.dt > 0 and sim.duration_s > 0 and sim.error_bound_m > 0, "sim dt, duration and bound must be > 0"),
        (sim.mass > 0 and sim.damping_ratio > 0, "sim mass and damping_ratio must be > 0"),
        (sim.k_max >= sim.k_min >= 0, "sim stiffness limits need k_max >= k_min >= 0"),
        (len(sim.f_ff) == 3, "sim.f_ff must have three entries"),
        (sim.k_couple > 0 and sim.k_wood > 0 and sim.mu >= 0, "sim contact parameters out of range"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def load_config(path=None, environ=None) -> PipelineConfig:
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: configuration must be a mapping")
    return from_dict(merge(raw, env_overrides(environ)))
