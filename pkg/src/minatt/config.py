"""Run configuration: sectioned key=value files, validation, presets.

Unknown sections or keys are errors; missing keys take the documented
defaults.  The two bundled presets (``experiment1``, ``experiment2``) carry
the reference reach experiments at desk scale.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields as dc_fields, replace
from importlib import resources

from .dynamics import ArmParams
from .errors import ConfigError

_ARM_KEYS = ("L1", "L2", "M1", "M2", "S1", "S2", "I1", "I2", "B11", "B12", "B21", "B22", "g")


@dataclass(frozen=True)
class SolverConfig:
    # run
    mode: str = "endpoint"
    seed: int = 20210120
    trackmax: int = 2000
    workers: int = 1
    # grid
    T: float = 0.5
    N: int = 40
    substeps: int = 4
    # experiment
    x_init: tuple = (0.0, 0.0, 0.0, 0.0)
    phi_f: tuple = (-0.26, 0.40, 0.0, 0.0)
    gamma: float = 1.0e6
    # box
    box_lower: tuple = (-5.0, -5.0, -300.0, -300.0)
    box_upper: tuple = (5.0, 5.0, 300.0, 300.0)
    box_intervals: tuple = (64, 64, 64, 64)
    # density
    support_halfwidth_cells: float = 2.0
    # init
    pf_diag: tuple = (1.0e5, 1.0, 1.0e5, 1.0)
    r_diag: tuple = (0.4, 1.3565)
    # optimizer
    eps0: float = 2.0e-3
    eps_tol: float = 5.0e-5
    max_outer: int = 200
    max_inner: int = 40
    eps_floor: float = 1.0e-12
    line_search_rule: str = "outer"
    volume_normalized: bool = False
    mass_floor: float = 0.25
    divergence_bound: float = 1.0e6
    # arm
    arm: ArmParams = field(default_factory=ArmParams)

    def validate(self) -> "SolverConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.mode in ("endpoint", "density-mismatch"), f"run.mode: unknown mode {self.mode!r}")
        need(self.line_search_rule in ("outer", "literal"),
             f"optimizer.line_search_rule: unknown rule {self.line_search_rule!r}")
        for key in ("T", "gamma", "eps0", "eps_tol", "eps_floor", "support_halfwidth_cells",
                    "divergence_bound"):
            need(getattr(self, key) > 0, f"{key} must be positive")
        need(self.N >= 2, "grid.intervals must be >= 2")
        need(self.substeps >= 1, "grid.substeps must be >= 1")
        need(self.trackmax >= 1, "run.trackmax must be >= 1")
        need(self.workers >= 1, "run.workers must be >= 1")
        need(self.max_outer >= 1 and self.max_inner >= 1, "optimizer iteration limits must be >= 1")
        need(0.0 <= self.mass_floor <= 1.0, "optimizer.mass_floor must lie in [0, 1]")
        need(len(self.x_init) == 4 and len(self.phi_f) == 4, "x_init and phi_f need 4 entries")
        need(len(self.box_lower) == len(self.box_upper) == len(self.box_intervals) == 4,
             "box requires 4 entries per field")
        need(all(lo < hi for lo, hi in zip(self.box_lower, self.box_upper)),
             "box.lower must be below box.upper")
        need(all(k >= 1 for k in self.box_intervals), "box.intervals must be >= 1")
        need(len(self.pf_diag) == 4 and all(w >= 0 for w in self.pf_diag),
             "init.pf_diag needs 4 nonnegative entries")
        need(len(self.r_diag) == 2 and all(w > 0 for w in self.r_diag),
             "init.r_diag needs 2 positive entries")
        return self


_SCHEMA = {
    "run": {"mode": "str", "seed": "int", "trackmax": "int", "workers": "int"},
    "grid": {"horizon": "float", "intervals": "int", "substeps": "int"},
    "experiment": {"x_init": "floats", "phi_f": "floats", "gamma": "float"},
    "box": {"lower": "floats", "upper": "floats", "intervals": "ints"},
    "density": {"support_halfwidth_cells": "float"},
    "init": {"pf_diag": "floats", "r_diag": "floats"},
    "optimizer": {
        "eps0": "float", "eps_tol": "float", "max_outer": "int", "max_inner": "int",
        "eps_floor": "float", "line_search_rule": "str", "volume_normalized": "bool",
        "mass_floor": "float", "divergence_bound": "float",
    },
    "arm": {k: "float" for k in _ARM_KEYS},
}

_FIELD_FOR = {
    ("run", "mode"): "mode",
    ("run", "seed"): "seed",
    ("run", "trackmax"): "trackmax",
    ("run", "workers"): "workers",
    ("grid", "horizon"): "T",
    ("grid", "intervals"): "N",
    ("grid", "substeps"): "substeps",
    ("experiment", "x_init"): "x_init",
    ("experiment", "phi_f"): "phi_f",
    ("experiment", "gamma"): "gamma",
    ("box", "lower"): "box_lower",
    ("box", "upper"): "box_upper",
    ("box", "intervals"): "box_intervals",
    ("density", "support_halfwidth_cells"): "support_halfwidth_cells",
    ("init", "pf_diag"): "pf_diag",
    ("init", "r_diag"): "r_diag",
    ("optimizer", "eps0"): "eps0",
    ("optimizer", "eps_tol"): "eps_tol",
    ("optimizer", "max_outer"): "max_outer",
    ("optimizer", "max_inner"): "max_inner",
    ("optimizer", "eps_floor"): "eps_floor",
    ("optimizer", "line_search_rule"): "line_search_rule",
    ("optimizer", "volume_normalized"): "volume_normalized",
    ("optimizer", "mass_floor"): "mass_floor",
    ("optimizer", "divergence_bound"): "divergence_bound",
}


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(p) for p in raw.replace(",", " ").split())
        if kind == "ints":
            return tuple(int(p) for p in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from exc


def parse_config_text(text: str) -> SolverConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc

    values = {}
    arm_kwargs = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            val = _convert(_SCHEMA[section][key], raw, f"{section}.{key}")
            if section == "arm":
                arm_kwargs[key] = val
            else:
                values[_FIELD_FOR[(section, key)]] = val
    if arm_kwargs:
        try:
            values["arm"] = ArmParams(**arm_kwargs)
        except ValueError as exc:
            raise ConfigError(f"arm: {exc}") from exc
    try:
        cfg = SolverConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def parse_config(path) -> SolverConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def write_config(cfg: SolverConfig) -> str:
    """Canonical text form; parse_config_text(write_config(c)) == c."""
    out = io.StringIO()

    def fmt(val):
        if isinstance(val, bool):
            return "true" if val else "false"
        if isinstance(val, tuple):
            return ", ".join(fmt(v) for v in val)
        if isinstance(val, float):
            return repr(val)
        return str(val)

    arm_defaults = ArmParams()
    for section, keys in _SCHEMA.items():
        lines = []
        for key in keys:
            if section == "arm":
                val = getattr(cfg.arm, key)
                lines.append(f"{key} = {fmt(val)}")
            else:
                val = getattr(cfg, _FIELD_FOR[(section, key)])
                lines.append(f"{key} = {fmt(val)}")
        out.write(f"[{section}]\n" + "\n".join(lines) + "\n\n")
    return out.getvalue()


def config_digest(cfg: SolverConfig) -> str:
    return hashlib.sha256(write_config(cfg).encode()).hexdigest()[:12]


def apply_fidelity(cfg: SolverConfig, fidelity: str) -> SolverConfig:
    """desk: config as-is.  paper: 256 cells per dimension with the
    equivalent 4x kernel half-width (same physical support)."""
    if fidelity == "desk":
        return cfg
    if fidelity == "paper":
        scale = 256 / max(cfg.box_intervals)
        return replace(
            cfg,
            box_intervals=(256, 256, 256, 256),
            support_halfwidth_cells=cfg.support_halfwidth_cells * scale,
        ).validate()
    raise ConfigError(f"unknown fidelity {fidelity!r}")


def preset_names() -> list[str]:
    return ["experiment1", "experiment2"]


def load_preset(name: str) -> SolverConfig:
    res = resources.files("minatt").joinpath(f"presets/{name}.ini")
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r} (have: {', '.join(preset_names())})")
    return parse_config_text(res.read_text(encoding="utf-8"))


def resolve_config(spec: str) -> SolverConfig:
    """Accept a preset name or a path to a config file."""
    import os

    if os.path.exists(spec):
        return parse_config(spec)
    if spec in preset_names():
        return load_preset(spec)
    raise ConfigError(f"no such config file or preset: {spec}")
