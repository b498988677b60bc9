"""Experiment configuration: TOML parsing, validation, canonical serialization.

Configs are flat key-value TOML with one table per concern (model, ramp,
protocols, output).  Defaults reproduce the reference efficiency-scan
setup: L = 10 with the qubit one flip below half filling, mean bath field
10, mean coupling 0.1, coupling disorder 0.05, sweep half-range 5, and
150 disorder realizations.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "serialize_config",
           "config_hash", "EXPERIMENTS"]

EXPERIMENTS = (
    "sweep-scan",
    "sector-scan",
    "gap-histogram",
    "level-stats",
    "cycles",
    "master-scaling",
    "fe-ramp",
    "power-scan",
    "speedlimit",
)

_PROTOCOLS = ("ua", "cd", "lcd", "fe")


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    # model
    size: int = 10
    omega_b: float = 10.0
    g_bar: float = 0.1
    gamma_xx: float = 0.05
    gamma_z: tuple = (0.05,)
    n_flips: int = -1  # -1: one flip below half filling (M = -1)
    # ramp / drive
    lambda0: float = 5.0
    tau_r: tuple = ()
    tau_r_over_tau0: tuple = ()
    omega: float = 100.0
    substeps_per_period: int = 48
    # protocols
    protocols: tuple = ("ua", "cd", "lcd")
    lcd_order: int = 1
    # sampling
    realizations: int = 150
    seed: int = 2024
    # experiment-specific knobs
    n_cycles: int = 100
    master_models: tuple = ("lcd:1.0", "ua:0.1", "ua:0.4")
    sizes: tuple = (8, 16, 32, 64)
    threshold: float = 0.99
    sectors: tuple = ()
    bins: int = 60
    lambda_grid: tuple = (0.0,)
    # output / execution
    out: str = "results.csv"
    threads: int = 1

    def sector(self) -> int:
        if self.n_flips == -1:
            return self.size // 2 - 1
        return self.n_flips

    def tau_grid(self) -> tuple:
        """Ramp durations in absolute time units."""
        if self.tau_r:
            return tuple(float(t) for t in self.tau_r)
        tau0 = 2.0 * self.lambda0 / self.g_bar**2
        return tuple(float(x) * tau0 for x in self.tau_r_over_tau0)


_SECTION_KEYS = {
    "model": ("size", "omega_b", "g_bar", "gamma_xx", "gamma_z", "n_flips"),
    "ramp": ("lambda0", "tau_r", "tau_r_over_tau0", "omega", "substeps_per_period"),
    "protocols": ("protocols", "lcd_order"),
    "output": ("out",),
    "master": ("master_models", "sizes", "threshold"),
    "scan": ("sectors", "bins", "lambda_grid", "n_cycles"),
}
_TOP_KEYS = ("experiment", "seed", "realizations", "threads")

_LIST_FIELDS = {"gamma_z", "tau_r", "tau_r_over_tau0", "protocols", "master_models",
                "sizes", "sectors", "lambda_grid"}


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a TOML config document, apply overrides, validate."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config parse error: {err}") from err

    flat: dict = {}
    known = set(_TOP_KEYS)
    for section, keys in _SECTION_KEYS.items():
        known.add(section)
        table = doc.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key == "path" and section == "output":
                key = "out"
            if key not in keys and not (section == "output" and key == "out"):
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            flat[key] = value
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SECTION_KEYS:
                raise ConfigError(f"unknown section [{key}]")
            continue
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}")
        flat[key] = value
    if overrides:
        flat.update({k: v for k, v in overrides.items() if v is not None})

    if "experiment" not in flat:
        raise ConfigError("missing required key 'experiment'")
    for name in _LIST_FIELDS:
        if name in flat and not isinstance(flat[name], (list, tuple)):
            flat[name] = (flat[name],)
        if name in flat:
            flat[name] = tuple(flat[name])
    valid_names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(flat) - valid_names
    if unknown:
        raise ConfigError(f"unknown fields: {sorted(unknown)}")
    cfg = ExperimentConfig(**flat)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Collect every violated precondition into one error."""
    problems = []
    if cfg.experiment not in EXPERIMENTS:
        problems.append(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.size < 2:
        problems.append(f"model.size must be >= 2, got {cfg.size}")
    if cfg.g_bar <= 0:
        problems.append("model.g_bar must be > 0")
    if cfg.gamma_xx < 0:
        problems.append("model.gamma_xx must be >= 0")
    if not cfg.gamma_z or any(g < 0 for g in cfg.gamma_z):
        problems.append("model.gamma_z values must be >= 0 and nonempty")
    if cfg.n_flips != -1 and not 0 <= cfg.n_flips <= cfg.size:
        problems.append(f"model.n_flips outside 0..{cfg.size}")
    if cfg.lambda0 <= 0:
        problems.append("ramp.lambda0 must be > 0")
    if cfg.omega <= 0:
        problems.append("ramp.omega must be > 0")
    if cfg.substeps_per_period < 40:
        problems.append("ramp.substeps_per_period must be >= 40")
    if not cfg.protocols:
        problems.append("protocols.protocols must be a nonempty list")
    for kind in cfg.protocols:
        if kind not in _PROTOCOLS:
            problems.append(f"unknown protocol {kind!r}")
    if cfg.lcd_order < 1:
        problems.append("protocols.lcd_order must be >= 1")
    if cfg.realizations < 1:
        problems.append("realizations must be >= 1")
    if cfg.threads < 1:
        problems.append("threads must be >= 1")
    if cfg.experiment in ("sweep-scan", "power-scan", "fe-ramp"):
        if not cfg.tau_grid():
            problems.append(f"{cfg.experiment} needs a nonempty tau_r or tau_r_over_tau0 grid")
    if cfg.experiment in ("sector-scan", "cycles") and len(cfg.tau_grid()) > 1:
        problems.append(f"{cfg.experiment} takes a single ramp time")
    if cfg.experiment == "cycles" and cfg.n_cycles < 1:
        problems.append("scan.n_cycles must be >= 1")
    if cfg.experiment == "master-scaling":
        if not cfg.sizes or any(s < 2 for s in cfg.sizes):
            problems.append("master.sizes must be nonempty with entries >= 2")
        if not 0 < cfg.threshold < 1:
            problems.append("master.threshold must lie in (0, 1)")
        for spec in cfg.master_models:
            label, _, eta = str(spec).partition(":")
            try:
                val = float(eta)
            except ValueError:
                val = -1.0
            if label not in ("ua", "lcd", "cd") or not 0 <= val <= 1:
                problems.append(f"bad master model spec {spec!r} (want e.g. 'ua:0.4')")
    if cfg.experiment == "gap-histogram" and cfg.bins < 1:
        problems.append("scan.bins must be >= 1")
    if cfg.experiment == "level-stats" and not cfg.lambda_grid:
        problems.append("scan.lambda_grid must be nonempty")
    if problems:
        raise ConfigError("invalid configuration: " + "; ".join(problems))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML rendering (stable field order) of a config."""
    lines = [f"{k} = {_fmt(getattr(cfg, k))}" for k in _TOP_KEYS]
    for section, keys in _SECTION_KEYS.items():
        lines.append("")
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the result-defining fields (output path and worker count are
    execution details and do not change any emitted number)."""
    canonical = replace(cfg, out="", threads=1)
    return hashlib.sha256(serialize_config(canonical).encode()).hexdigest()[:16]


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    updates = {k: v for k, v in kwargs.items() if v is not None}
    out = replace(cfg, **updates)
    validate_config(out)
    return out
