"""Experiment configuration: flat ``key = value`` files with dotted keys.

Example::

    sim.lambda = 1000
    sim.mu = 0.1
    run.measure_time = 20000
    sweep.mu_min = 0.1
    sweep.mu_max = 100
    sweep.points = 7

Blank lines and ``#`` comments are ignored.  Unknown keys are an error.
:func:`dump_config` writes every resolved value back, so ``parse(dump(c)) == c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import EstimatorSettings
from .params import DESK, PRESETS, ModelParams, SeedSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    mu_min: float
    mu_max: float
    points: int

    def grid(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.mu_min])
        return np.geomspace(self.mu_min, self.mu_max, self.points)

    def validate(self) -> None:
        if not (self.mu_min > 0 and self.mu_max > 0 and self.points >= 1):
            raise ConfigError("sweep needs mu_min > 0, mu_max > 0 and points >= 1")
        g = self.grid()
        if self.points > 1 and not np.all(np.diff(g) > 0):
            raise ConfigError("sweep grid must be strictly increasing")


@dataclass(frozen=True)
class TheorySettings:
    grid_step: float | None = None      # default epsilon / 10
    domain_max: float | None = None     # default 20 diffusion lengths
    tol: float = 1e-6
    max_iter: int = 200_000
    gap_K: int = 200
    profile_points: int = 2001


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams = DESK
    seed: SeedSpec = SeedSpec(20240601)
    warmup_time: float | None = None    # default max(50/v, 50/mu)
    measure_time: float = 5000.0
    sweep: SweepSpec | None = None
    estimators: EstimatorSettings = field(default_factory=EstimatorSettings)
    theory: TheorySettings = field(default_factory=TheorySettings)
    out_dir: str = "out"
    threads: int = 1
    event_log: bool = False

    def validate(self) -> "ExperimentConfig":
        from .params import validate

        validate(self.params)
        if self.warmup_time is not None and not self.warmup_time >= 0:
            raise ConfigError("warmup_time must be non-negative")
        if not self.measure_time >= 0 or not math.isfinite(self.measure_time):
            raise ConfigError("measure_time must be non-negative and finite")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.sweep is not None:
            self.sweep.validate()
        return self


# dotted key -> (section, attribute, type)
_KEYS = {
    "sim.lambda": ("params", "lam", float),
    "sim.v": ("params", "v", float),
    "sim.mu": ("params", "mu", float),
    "sim.delta": ("params", "delta", float),
    "sim.cutoff": ("params", "cutoff", int),
    "seed.master": ("seed", "master_seed", int),
    "seed.run_index": ("seed", "run_index", int),
    "run.warmup_time": (None, "warmup_time", float),
    "run.measure_time": (None, "measure_time", float),
    "run.threads": (None, "threads", int),
    "run.event_log": (None, "event_log", bool),
    "out.dir": (None, "out_dir", str),
    "sweep.mu_min": ("sweep", "mu_min", float),
    "sweep.mu_max": ("sweep", "mu_max", float),
    "sweep.points": ("sweep", "points", int),
    "est.snapshot_dt": ("estimators", "snapshot_dt", float),
    "est.msd_tau1": ("estimators", "msd_tau1", float),
    "est.msd_tau2": ("estimators", "msd_tau2", float),
    "est.l_max": ("estimators", "l_max", int),
    "est.gap_k": ("estimators", "gap_k", int),
    "est.density_step": ("estimators", "density_step", float),
    "est.density_rmax": ("estimators", "density_rmax", float),
    "est.pool_sides": ("estimators", "pool_sides", bool),
    "est.batches": ("estimators", "batches", int),
    "theory.grid_step": ("theory", "grid_step", float),
    "theory.domain_max": ("theory", "domain_max", float),
    "theory.tol": ("theory", "tol", float),
    "theory.max_iter": ("theory", "max_iter", int),
    "theory.gap_K": ("theory", "gap_K", int),
    "theory.profile_points": ("theory", "profile_points", int),
}


def _convert(key: str, kind, text: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text, 0) if text.lower().startswith("0x") else int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def parse_pairs(pairs: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``{dotted_key: text}`` overrides on top of ``base``."""
    cfg = base or ExperimentConfig()
    sections: dict[str, dict] = {}
    top: dict = {}
    for key, text in pairs.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        section, attr, kind = _KEYS[key]
        val = _convert(key, kind, text)
        if section is None:
            top[attr] = val
        else:
            sections.setdefault(section, {})[attr] = val
    if "params" in sections:
        top["params"] = replace(cfg.params, **sections["params"])
    if "seed" in sections:
        top["seed"] = replace(cfg.seed, **sections["seed"])
    if "sweep" in sections:
        cur = cfg.sweep
        vals = {"mu_min": None, "mu_max": None, "points": None}
        if cur is not None:
            vals.update(mu_min=cur.mu_min, mu_max=cur.mu_max, points=cur.points)
        vals.update(sections["sweep"])
        if None in vals.values():
            raise ConfigError("sweep needs mu_min, mu_max and points")
        top["sweep"] = SweepSpec(**vals)
    if "estimators" in sections:
        est = dict(sections["estimators"])
        t1, t2 = est.pop("msd_tau1", None), est.pop("msd_tau2", None)
        if (t1 is None) != (t2 is None) and cfg.estimators.msd_range is None:
            raise ConfigError("est.msd_tau1 and est.msd_tau2 go together")
        if t1 is not None or t2 is not None:
            old = cfg.estimators.msd_range or (None, None)
            est["msd_range"] = (t1 if t1 is not None else old[0], t2 if t2 is not None else old[1])
        top["estimators"] = replace(cfg.estimators, **est)
    if "theory" in sections:
        top["theory"] = replace(cfg.theory, **sections["theory"])
    return replace(cfg, **top)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        pairs[key] = val.strip()
    return parse_pairs(pairs, base)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def _text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Every set value as ``key = value`` lines (floats round-trip exactly)."""
    lines = []
    for key, (section, attr, _) in _KEYS.items():
        if section is None:
            v = getattr(cfg, attr)
        elif section == "sweep":
            if cfg.sweep is None:
                continue
            v = getattr(cfg.sweep, attr)
        elif section == "estimators" and attr in ("msd_tau1", "msd_tau2"):
            rng = cfg.estimators.msd_range
            if rng is None:
                continue
            v = float(rng[0 if attr == "msd_tau1" else 1])
        else:
            v = getattr(getattr(cfg, section), attr)
        if v is None:
            continue
        lines.append(f"{key} = {_text(v)}")
    return "\n".join(lines) + "\n"


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return ExperimentConfig(params=PRESETS[name])


__all__ = [
    "ConfigError", "ExperimentConfig", "SweepSpec", "TheorySettings", "dump_config",
    "load_config", "parse_config_text", "parse_pairs", "preset_config",
]
