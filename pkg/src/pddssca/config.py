"""Flat ``section.key = value`` run configuration with a strict schema.

Lines are ``key = value``; blank lines and text after ``#`` are ignored.
Every key has a default; unknown keys and malformed values raise
:class:`ConfigError`. See ``docs/config-schema.md`` for the full table.
"""
from __future__ import annotations

import hashlib
from typing import Any

from .core import ProblemError, StepSchedule
from .longterm import SolverConfig

__all__ = ["ConfigError", "SCHEMA", "defaults", "parse_config", "load_config", "canonical_text",
           "config_hash", "solver_config", "OUTPUT_ONLY_KEYS"]


class ConfigError(ValueError):
    """Invalid configuration text or value."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def conv(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value
    return conv


# key -> (converter, default, description)
SCHEMA: dict[str, tuple[Any, Any, str]] = {
    "experiment": (_choice("cmac", "thp", "toy"), "cmac", "application to run"),
    "solver.B": (int, 20, "mini-batch size"),
    "solver.T_max": (int, 100, "outer iteration cap"),
    "solver.tau": (float, 1.0, "proximal weight of every surrogate"),
    "solver.stop_tolerance": (float, 0.0, "stall threshold on iterate movement; 0 disables"),
    "solver.stop_window": (int, 10, "iterations the stall threshold must hold"),
    "solver.workers": (int, 1, "threads for per-sample solves; results do not depend on it"),
    "solver.seed": (int, 0, "master seed"),
    "solver.gap_tol": (float, 1e-8, "duality-gap target of the surrogate solver"),
    "solver.report_batch": (int, 200, "states in the final KKT report batch"),
    "solver.record_time": (_bool, False, "write wall-clock milliseconds into the trace"),
    "solver.time_budget": (float, 0.0, "wall-clock seconds after which the run stops; 0 disables"),
    "schedule.rho_scale": (float, 10.0, "rho_t = scale / (shift + t)^exponent"),
    "schedule.rho_shift": (float, 10.0, "see schedule.rho_scale"),
    "schedule.rho_exponent": (float, 0.9, "see schedule.rho_scale"),
    "schedule.gamma_scale": (float, 15.0, "gamma_t = scale / (shift + t)"),
    "schedule.gamma_shift": (float, 15.0, "see schedule.gamma_scale"),
    "cmac.N": (int, 2, "number of users"),
    "cmac.gamma": (float, 0.5, "average interference budget"),
    "cmac.power_db": (float, 5.0, "per-user average power budget in dB"),
    "cmac.p_max": (float, 1e6, "upper end of the per-state power box"),
    "cmac.gain_law": (_choice("exponential", "uniform"), "exponential", "law of the gains a_i, b_i"),
    "cmac.gain_mean": (float, 1.0, "mean of every gain"),
    "cmac.pool_size": (int, 1000, "fixed sample set shared by the run and the baselines"),
    "cmac.pool_seed": (int, 1, "seed of the fixed sample set"),
    "thp.M": (int, 16, "transmit antennas"),
    "thp.S": (int, 2, "RF chains"),
    "thp.K": (int, 2, "users"),
    "thp.paths": (int, 3, "propagation paths per user"),
    "thp.gamma": (float, 1.0, "per-user average rate target in nats"),
    "thp.g_bound": (float, 1e3, "box half-width on each real digital precoder coordinate"),
    "thp.J": (int, 5, "unrolled WMMSE layers"),
    "thp.eval_size": (int, 1000, "held-out channels for the final average rates"),
    "toy.constrained": (_bool, True, "include the long-term constraint"),
    "toy.noise": (float, 0.5, "standard deviation of the state"),
    "baseline.ellipsoid": (_bool, True, "run the dual ellipsoid baseline"),
    "baseline.short_term": (_bool, True, "run the per-state budget baseline"),
    "baseline.volume_tol": (float, 1e-10, "ellipsoid volume stopping threshold"),
    "output.dir": (str, "run", "output directory"),
    "output.emit_plot_data": (_bool, True, "write trace.csv (the plot series)"),
}

# keys that never change the numbers and are left out of the config hash
OUTPUT_ONLY_KEYS = ("solver.workers", "output.dir", "output.emit_plot_data")


def defaults() -> dict:
    return {k: v[1] for k, v in SCHEMA.items()}


def _convert(key: str, raw) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key: {key}")
    conv = SCHEMA[key][0]
    if not isinstance(raw, str):
        raw = str(raw)
    try:
        return conv(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config(text: str, overrides: dict | None = None) -> dict:
    """Parse config text on top of the defaults, then apply ``overrides``."""
    cfg = defaults()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg[key] = _convert(key, value)
    for key, value in (overrides or {}).items():
        cfg[key] = _convert(key, value)
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def canonical_text(cfg: dict, exclude=OUTPUT_ONLY_KEYS) -> str:
    """Sorted ``key = value`` lines; floats use ``repr`` so the text round-trips."""
    return "".join(f"{k} = {cfg[k]!r}\n" if not isinstance(cfg[k], str) else f"{k} = {cfg[k]}\n"
                   for k in sorted(cfg) if k not in exclude)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:16]


def solver_config(cfg: dict) -> SolverConfig:
    try:
        schedule = StepSchedule(cfg["schedule.rho_scale"], cfg["schedule.rho_shift"],
                                cfg["schedule.rho_exponent"], cfg["schedule.gamma_scale"],
                                cfg["schedule.gamma_shift"])
        return SolverConfig(B=cfg["solver.B"], T_max=cfg["solver.T_max"], tau=cfg["solver.tau"],
                            schedule=schedule, stop_tolerance=cfg["solver.stop_tolerance"],
                            stop_window=cfg["solver.stop_window"], workers=cfg["solver.workers"],
                            seed=cfg["solver.seed"], gap_tol=cfg["solver.gap_tol"],
                            report_batch=cfg["solver.report_batch"],
                            record_time=cfg["solver.record_time"], time_budget=cfg["solver.time_budget"])
    except ProblemError as exc:
        raise ConfigError(str(exc)) from None
