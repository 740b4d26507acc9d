"""Run configuration: INI file loading, ``key=value`` overrides and defaults.

A config file has up to four sections::

    [system]
    eta_d = 0.56
    p_d = 1e-8
    e_d_x = 0.035
    alpha = 0.167
    f = 1.1
    delta = pi/18

    [optimizer]
    population_size = 64
    seed = 12345

    [sweep]
    start = 0
    stop = 700
    step = 10
    # or: grid = 0, 100, 200

    [run]
    protocol_kind = practical
    output_path = sweep.csv

Precedence is command-line flags, then ``--override`` pairs, then the file,
then the built-in defaults.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional

import numpy as np

from cka_rate.keyrate import PRACTICAL, SINGLE_PHOTON
from cka_rate.model import DEFAULT_SYSTEM, SystemParams
from cka_rate.optimizer import OptimizerConfig

__all__ = ["RunConfig", "load_config", "parse_override", "parse_number", "distance_grid"]

DEFAULT_GRID = (0.0, 700.0, 10.0)

_PI_EXPR = re.compile(r"^\s*(?:(?P<num>[-+0-9.eE]+)\s*\*?\s*)?pi\s*(?:/\s*(?P<den>[-+0-9.eE]+))?\s*$")

_SYSTEM_FIELDS = {f.name: f.type for f in fields(SystemParams)}
_OPTIMIZER_FIELDS = {f.name: f.type for f in fields(OptimizerConfig)}


def parse_number(text: str) -> float:
    """Float parser that also understands ``pi``, ``pi/18`` and ``2*pi/9``."""
    text = str(text).strip()
    m = _PI_EXPR.match(text)
    if m:
        num = float(m.group("num")) if m.group("num") else 1.0
        den = float(m.group("den")) if m.group("den") else 1.0
        return num * math.pi / den
    return float(text)


def distance_grid(start: float, stop: float, step: float) -> tuple:
    """Inclusive arithmetic grid ``start, start+step, ..., stop``."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    if stop < start:
        raise ValueError("grid stop must not precede start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(x) for x in np.round(start + step * np.arange(n), 9))


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams = DEFAULT_SYSTEM
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sweep_grid: tuple = field(default_factory=lambda: distance_grid(*DEFAULT_GRID))
    overrides: Mapping = field(default_factory=dict)
    output_path: Optional[str] = None
    protocol_kind: str = PRACTICAL

    def __post_init__(self):
        if self.protocol_kind not in (PRACTICAL, SINGLE_PHOTON):
            raise ValueError(f"protocol_kind must be {PRACTICAL!r} or {SINGLE_PHOTON!r}")


def _coerce(value: str, typ):
    typ = str(typ)
    if typ in ("int",):
        return int(float(value))
    if typ in ("str",):
        return value.strip()
    if typ in ("tuple",):
        return tuple(parse_number(v) for v in value.split(","))
    return parse_number(value)


def parse_override(text: str) -> tuple:
    """Split ``key=value``; the key may be qualified as ``system.key`` or ``optimizer.key``."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, value = (p.strip() for p in text.split("=", 1))
    if not key:
        raise ValueError(f"override {text!r} has an empty key")
    return key, value


def _route(key: str):
    if "." in key:
        section, name = key.split(".", 1)
    elif key in _SYSTEM_FIELDS:
        section, name = "system", key
    elif key in _OPTIMIZER_FIELDS:
        section, name = "optimizer", key
    else:
        raise ValueError(f"unknown parameter {key!r}")
    table = {"system": _SYSTEM_FIELDS, "optimizer": _OPTIMIZER_FIELDS}.get(section)
    if table is None or name not in table:
        raise ValueError(f"unknown parameter {key!r}")
    return section, name, table[name]


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Return ``cfg`` with ``(key, value)`` string pairs applied and recorded."""
    sys_changes, opt_changes = {}, {}
    record = dict(cfg.overrides)
    for key, value in pairs:
        section, name, typ = _route(key)
        target = sys_changes if section == "system" else opt_changes
        target[name] = _coerce(value, typ)
        record[f"{section}.{name}"] = target[name]
    return replace(
        cfg,
        system=cfg.system.with_overrides(**sys_changes) if sys_changes else cfg.system,
        optimizer=replace(cfg.optimizer, **opt_changes) if opt_changes else cfg.optimizer,
        overrides=record,
    )


def load_config(path: Optional[str] = None, overrides=()) -> RunConfig:
    """Build a RunConfig from defaults, an optional INI file, and override strings."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as fh:
            parser.read_file(fh)
        unknown = set(parser.sections()) - {"system", "optimizer", "sweep", "run"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        sys_kw = {k: _coerce(v, _SYSTEM_FIELDS[k]) for k, v in _section(parser, "system", _SYSTEM_FIELDS).items()}
        opt_kw = {k: _coerce(v, _OPTIMIZER_FIELDS[k]) for k, v in _section(parser, "optimizer", _OPTIMIZER_FIELDS).items()}
        cfg = replace(cfg, system=SystemParams(**sys_kw), optimizer=OptimizerConfig(**opt_kw))
        if parser.has_section("sweep"):
            sw = parser["sweep"]
            if "grid" in sw:
                grid = tuple(parse_number(v) for v in sw["grid"].split(",") if v.strip())
            else:
                start, stop, step = DEFAULT_GRID
                grid = distance_grid(
                    parse_number(sw.get("start", start)), parse_number(sw.get("stop", stop)), parse_number(sw.get("step", step))
                )
            cfg = replace(cfg, sweep_grid=grid)
        if parser.has_section("run"):
            run = parser["run"]
            cfg = replace(
                cfg,
                protocol_kind=run.get("protocol_kind", cfg.protocol_kind).strip(),
                output_path=run.get("output_path", cfg.output_path),
            )
    return apply_overrides(cfg, [parse_override(o) for o in overrides])


def _section(parser, name, allowed):
    if not parser.has_section(name):
        return {}
    items = dict(parser[name])
    bad = set(items) - set(allowed)
    if bad:
        raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
    return items
