"""Run configuration: parsing, validation, canonical serialization.

Two file formats are accepted and produce identical configs: a flat
``key = value`` line format (one key per line, ``#`` comments allowed)
and a single JSON object.  ``to_text`` emits the line format and round
trips losslessly because floats are written with ``repr``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_CURVE_KINDS = ("disc", "ellipse", "fourier")
_FIELD_KINDS = ("normal", "translation")


@dataclass
class RunConfig:
    # curve description
    curve: str = "disc"
    radius: float = 1.0
    ellipse_a: float = 1.5
    ellipse_b: float = 1.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()
    # mesh and element
    h: float = 0.1
    levels: int = 3
    degree: int = 2
    penalty: float = 20.0
    # eigensolver
    eig_tol: float = 1e-6
    shift: float = 0.0
    # perturbation field spec
    field_kind: str = "normal"
    mode: int = 2
    amplitude: float = 1.0
    axis: int = 0
    # finite differences
    fd_step: float = 0.02
    # bookkeeping
    out_dir: str = "runs"
    seed: int = 7

    def validate(self):
        if self.curve not in _CURVE_KINDS:
            raise ConfigError("unknown curve kind %r" % (self.curve,))
        if self.field_kind not in _FIELD_KINDS:
            raise ConfigError("unknown field kind %r" % (self.field_kind,))
        if not 1 <= self.levels <= 6:
            raise ConfigError("levels must lie in [1, 6], got %r" % (self.levels,))
        if self.degree != 2:
            raise ConfigError("only degree-2 elements are implemented")
        for name in ("h", "penalty", "eig_tol", "fd_step", "radius",
                     "ellipse_a", "ellipse_b", "amplitude"):
            if not getattr(self, name) > 0:
                raise ConfigError("%s must be positive" % name)
        if self.axis not in (0, 1):
            raise ConfigError("axis must be 0 or 1")
        if self.mode < 1:
            raise ConfigError("mode must be >= 1")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["cos_coeffs"] = list(self.cos_coeffs)
        d["sin_coeffs"] = list(self.sin_coeffs)
        return d

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                txt = ",".join(repr(float(c)) for c in v)
            elif isinstance(v, float):
                txt = repr(v)
            else:
                txt = str(v)
            lines.append("%s = %s" % (f.name, txt))
        return "\n".join(lines) + "\n"

    def sha256(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name, raw):
    """Cast a parsed scalar/list to the declared field type."""
    if name not in _FIELD_TYPES:
        raise ConfigError("unknown config key %r" % name)
    kind = _FIELD_TYPES[name]
    try:
        if kind == "tuple":
            if isinstance(raw, str):
                parts = [p for p in raw.split(",") if p.strip()]
                return tuple(float(p) for p in parts)
            return tuple(float(c) for c in raw)
        if kind == "float":
            return float(raw)
        if kind == "int":
            if isinstance(raw, float) and raw != int(raw):
                raise ValueError(raw)
            return int(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad value for %s: %r" % (name, raw)) from exc


def from_dict(data):
    cfg = RunConfig()
    for key, raw in data.items():
        setattr(cfg, key, _coerce(key, raw))
    return cfg.validate()


def parse_config(text):
    """Parse either config format from a string."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("invalid JSON config: %s" % exc) from exc
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be a single object")
        return from_dict(data)
    data = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("line %d: expected key = value, got %r" % (ln, line))
        key, _, val = body.partition("=")
        data[key.strip()] = val.strip()
    return from_dict(data)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    return parse_config(text)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def build_curve(cfg):
    """Construct the geometry named by the config."""
    from . import geometry
    if cfg.curve == "disc":
        return geometry.make_disc(cfg.radius)
    if cfg.curve == "ellipse":
        return geometry.make_ellipse(cfg.ellipse_a, cfg.ellipse_b)
    return geometry.make_fourier_domain(cfg.cos_coeffs, cfg.sin_coeffs, cfg.radius)


def build_field(cfg, curve):
    """Construct the perturbation field named by the config."""
    import numpy as np
    from . import geometry
    if cfg.field_kind == "translation":
        return geometry.make_translation_field(cfg.axis)
    amp, mode = cfg.amplitude, cfg.mode
    raw = geometry.make_normal_field(curve, lambda th: amp * np.cos(mode * th))
    return geometry.project_volume_preserving(curve, raw)
