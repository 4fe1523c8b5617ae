"""Experiment configuration: parsing, validation and a canonical text form.

A config document is either JSON (a flat object) or ``key = value`` lines
(``#`` starts a comment). Keys mirror the command-line flags with
underscores instead of dashes.
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field

from .ensemble import OBSERVERS, N3_ONLY, SCAN_OBSERVABLES

MODES = ("finite", "density", "scan", "renorm", "verify")
FINITE_EXTRA_OBSERVABLES = {"x"}  # raw site positions
DENSITY_OBSERVABLES = {"support", "sup", "tv", "center_of_mass", "mass_defect", "wing_mass"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "finite"
    epsilon: float | None = None
    epsilon_grid: tuple[float, ...] | None = None
    sites: int = 3
    grid_size: int = 2**14
    steps: int = 1_000
    burn_in: int = 0
    seed: int = 0
    init: str = "uniform-random"
    observables: tuple[str, ...] = ()
    orbits: int = 1
    bins: int = 2**10
    out_dir: str = "out"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("epsilon_grid", "observables"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


# ---------------------------------------------------------------- value coercion

def _as_int(key: str, raw) -> int:
    if isinstance(raw, bool):
        raise ConfigError(f"{key}: expected an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    try:
        val = float(raw)  # accepts "1e5"
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if not math.isfinite(val) or val != int(val):
        raise ConfigError(f"{key}: expected an integer, got {raw!r}")
    return int(val)


def _as_float(key: str, raw) -> float:
    if isinstance(raw, str) and "/" in raw:
        num, _, den = raw.partition("/")
        try:
            return float(num) / float(den)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{key}: cannot read {raw!r} as a number") from None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as a number") from None


def _as_list(raw) -> list:
    if isinstance(raw, (list, tuple)):
        return list(raw)
    text = str(raw).strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    return [t.strip() for t in text.split(",") if t.strip()]


def _coerce(key: str, raw):
    if key in ("mode", "init", "out_dir"):
        return str(raw).strip()
    if key in ("sites", "grid_size", "steps", "burn_in", "seed", "orbits", "bins"):
        return _as_int(key, raw)
    if key == "epsilon":
        return None if raw is None or raw == "" else _as_float(key, raw)
    if key == "epsilon_grid":
        if raw is None or raw == "":
            return None
        return tuple(expand_grid(raw))
    if key == "observables":
        return tuple(str(o) for o in _as_list(raw))
    raise ConfigError(f"unknown key {key!r}")


def expand_grid(raw) -> list[float]:
    """Comma list of values, or ``start:stop:count`` for an inclusive linspace."""
    if isinstance(raw, str) and raw.count(":") == 2:
        a, b, n = raw.split(":")
        lo, hi, cnt = _as_float("epsilon_grid", a), _as_float("epsilon_grid", b), _as_int("epsilon_grid", n)
        if cnt < 1:
            raise ConfigError("epsilon_grid: count must be positive")
        if cnt == 1:
            return [lo]
        return [lo + (hi - lo) * k / (cnt - 1) for k in range(cnt)]
    return [_as_float("epsilon_grid", v) for v in _as_list(raw)]


# ---------------------------------------------------------------- initial conditions

_BUMP = re.compile(r"^bump\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)$")
_SINE = re.compile(r"^sine\(\s*([^,()]+)\s*\)$")


@dataclass(frozen=True)
class InitSpec:
    kind: str  # uniform-random | explicit | bump | sine | uniform
    args: tuple[float, ...] = field(default_factory=tuple)


def parse_init(text: str) -> InitSpec:
    t = text.strip()
    if t == "uniform-random":
        return InitSpec("uniform-random")
    if t == "uniform":
        return InitSpec("uniform")
    if m := _BUMP.match(t):
        return InitSpec("bump", (_as_float("init", m.group(1)), _as_float("init", m.group(2))))
    if m := _SINE.match(t):
        return InitSpec("sine", (_as_float("init", m.group(1)),))
    try:
        vals = tuple(_as_float("init", v) for v in _as_list(t))
    except ConfigError:
        vals = ()
    if vals:
        return InitSpec("explicit", vals)
    raise ConfigError(
        f"init: unrecognised spec {text!r} (uniform-random | x1,x2,... | bump(c,w) | sine(a) | uniform)"
    )


# ---------------------------------------------------------------- validation

def _check_eps(key: str, eps: float, upper: float = 1.0) -> None:
    if not (math.isfinite(eps) and 0.0 <= eps < upper):
        raise ConfigError(f"{key}: epsilon out of range, need 0 <= eps < {upper:g}, got {eps!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: unknown mode {cfg.mode!r}, choose from {', '.join(MODES)}")
    if cfg.mode == "verify":
        return cfg
    if cfg.steps < 1:
        raise ConfigError(f"steps: must be at least 1, got {cfg.steps}")
    if cfg.burn_in < 0:
        raise ConfigError(f"burn_in: must be nonnegative, got {cfg.burn_in}")
    if cfg.seed < 0:
        raise ConfigError(f"seed: must be nonnegative, got {cfg.seed}")
    if cfg.orbits < 1:
        raise ConfigError(f"orbits: must be at least 1, got {cfg.orbits}")
    if cfg.bins < 1:
        raise ConfigError(f"bins: must be at least 1, got {cfg.bins}")
    upper = 0.5 if cfg.mode == "renorm" else 1.0
    if cfg.mode in ("finite", "density"):
        if cfg.epsilon is None:
            raise ConfigError(f"epsilon: required in {cfg.mode} mode")
    if cfg.mode in ("scan", "renorm") and cfg.epsilon is None and not cfg.epsilon_grid:
        raise ConfigError(f"epsilon: {cfg.mode} mode needs epsilon or epsilon_grid")
    if cfg.epsilon is not None:
        _check_eps("epsilon", cfg.epsilon, upper)
    for e in cfg.epsilon_grid or ():
        _check_eps("epsilon_grid", e, upper)
    if cfg.mode in ("finite", "scan"):
        if cfg.sites < 2:
            raise ConfigError(f"sites: need N >= 2, got {cfg.sites}")
    if cfg.mode == "density":
        m = cfg.grid_size
        if m < 2 or m & (m - 1):
            raise ConfigError(f"grid_size: must be a power of two, got {m}")
    init = parse_init(cfg.init)
    if cfg.mode == "finite":
        if init.kind not in ("uniform-random", "explicit"):
            raise ConfigError(f"init: {init.kind} is a density spec, finite mode needs uniform-random or a list")
        if init.kind == "explicit" and len(init.args) != cfg.sites:
            raise ConfigError(f"init: {len(init.args)} positions given for {cfg.sites} sites")
        if init.kind == "explicit" and cfg.orbits != 1:
            raise ConfigError("orbits: an explicit initial condition defines a single orbit")
        allowed = set(OBSERVERS) | FINITE_EXTRA_OBSERVABLES
        for o in cfg.observables:
            if o not in allowed:
                raise ConfigError(f"observables: unknown observable {o!r}")
            if o in N3_ONLY and cfg.sites != 3:
                raise ConfigError(f"observables: {o!r} needs sites=3")
            if o == "v" and cfg.sites != 2:
                raise ConfigError("observables: 'v' needs sites=2")
    elif cfg.mode == "density":
        if init.kind not in ("bump", "sine", "uniform"):
            raise ConfigError(f"init: density mode needs bump(c,w), sine(a) or uniform, got {cfg.init!r}")
        if init.kind == "bump" and not 0.0 < init.args[1] <= 1.0:
            raise ConfigError(f"init: bump width must lie in (0, 1], got {init.args[1]}")
        for o in cfg.observables:
            if o not in DENSITY_OBSERVABLES:
                raise ConfigError(f"observables: unknown density observable {o!r}")
    elif cfg.mode == "scan":
        for o in cfg.observables:
            if o not in SCAN_OBSERVABLES:
                raise ConfigError(f"observables: unknown scan observable {o!r}")
    return cfg


# ---------------------------------------------------------------- documents

def _parse_kv(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_document(text: str) -> dict:
    """Raw key/value mapping from a JSON or key=value document."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: malformed JSON ({exc})") from None
        if "config" in data and "outputs" in data:  # a run manifest: replay its config
            data = data["config"]
        if not isinstance(data, dict):
            raise ConfigError("config: expected a flat object")
        return data
    return _parse_kv(text)


def build_config(values: dict) -> ExperimentConfig:
    """Normalise keys, reject unknown ones, coerce types and validate."""
    kwargs = {}
    for raw_key, raw in values.items():
        key = raw_key.strip().replace("-", "_")
        if key == "n_sites" or key == "N":
            key = "sites"
        if key not in FIELDS:
            raise ConfigError(f"unknown key {raw_key!r}")
        kwargs[key] = _coerce(key, raw)
    return validate(ExperimentConfig(**kwargs))


def parse_config(text: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Config from a document, with ``overrides`` (e.g. flags) taking precedence."""
    values = parse_document(text) if text else {}
    values = {k.replace("-", "_"): v for k, v in values.items()}
    for k, v in (overrides or {}).items():
        values[k.replace("-", "_")] = v
    return build_config(values)


def _emit_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_emit_value(x) for x in v)
    return str(v)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical key = value text; ``parse_config(emit_config(c)) == c``."""
    lines = [f"{name} = {_emit_value(getattr(cfg, name))}" for name in FIELDS]
    return "\n".join(lines) + "\n"
