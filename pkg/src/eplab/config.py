"""Scenario configuration: parsing, defaults and object construction.

A config is a JSON object. Nested sections and dotted flat keys are
equivalent, so ``{"initial.rho.amplitude": 0.1}`` and
``{"initial": {"rho": {"amplitude": 0.1}}}`` mean the same thing. Every
key has a default except ``scenario`` and ``nu``.
"""
import copy
import json

import numpy as np

from .background import BackgroundProfile, Envelope, Variant
from .exceptions import ConfigError
from .fields import Grid, TrigInterpolant

SCENARIOS = ("pde", "phaseplane")
SOLVERS = ("lagrangian", "eulerian")

DEFAULTS = {
    "solver": "lagrangian",
    "background": {
        "kind": "constant",
        "cbar": 1.0,
        "shape": {"mode": 1, "amplitude": 0.2, "phase": "cos"},
        "envelope": {"kind": "exponential", "C1": 1.0, "r1": 0.5, "p": 2.0},
    },
    "initial": {
        "rho": {"base": None, "mode": 1, "amplitude": 0.0},
        "u": {"mode": 1, "amplitude": 0.0},
    },
    "particles": 1024,
    "grid": 256,
    "dt": 1e-3,
    "T": 10.0,
    "diag_every": 10,
    "field_solve": "label",
    "eulerian": {"dt": None, "courant": 0.5, "speed": "global"},
    "phaseplane": {"w0": 0.0, "s0": None, "x": 0.0},
    "fit": {"floor": 1e-10},
}
REQUIRED = ("scenario", "nu")


def _expand_dotted(d, where="config"):
    out = {}
    for key, val in d.items():
        if not isinstance(key, str) or not key:
            raise ConfigError(f"{where}: invalid key {key!r}")
        if isinstance(val, dict):
            val = _expand_dotted(val, f"{where}.{key}")
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{where}: key {key!r} conflicts with a scalar value")
        leaf = parts[-1]
        if isinstance(val, dict) and isinstance(node.get(leaf), dict):
            node[leaf] = _merge(node[leaf], val, f"{where}.{key}")
        else:
            node[leaf] = val
    return out


def _merge(base, over, where="config"):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key in out and isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"key '{where}.{key}' must be a section, got {val!r}")
            out[key] = _merge(out[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def _check_known(cfg, defaults, prefix=""):
    for key, val in cfg.items():
        name = f"{prefix}{key}"
        if key not in defaults and name not in REQUIRED:
            raise ConfigError(f"unknown key '{name}'")
        if isinstance(defaults.get(key), dict) and isinstance(val, dict):
            _check_known(val, defaults[key], f"{name}.")


def _number(cfg, path, positive=False, nonnegative=False, integer=False, allow_none=False):
    node = cfg
    for p in path.split("."):
        node = node[p]
    if node is None and allow_none:
        return None
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"key '{path}' must be a number, got {node!r}")
    if integer and int(node) != node:
        raise ConfigError(f"key '{path}' must be an integer, got {node!r}")
    if not np.isfinite(node):
        raise ConfigError(f"key '{path}' must be finite")
    if positive and node <= 0:
        raise ConfigError(f"key '{path}' must be positive, got {node!r}")
    if nonnegative and node < 0:
        raise ConfigError(f"key '{path}' must be nonnegative, got {node!r}")
    return int(node) if integer else float(node)


def _choice(cfg, path, options):
    node = cfg
    for p in path.split("."):
        node = node[p]
    if node not in options:
        raise ConfigError(f"key '{path}' must be one of {', '.join(options)}; got {node!r}")
    return node


def normalize(raw):
    """Validate a config mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _expand_dotted(raw)
    for key in REQUIRED:
        if key not in cfg:
            raise ConfigError(f"missing required key '{key}'")
    _check_known(cfg, DEFAULTS)
    cfg = _merge(DEFAULTS, cfg)
    _choice(cfg, "scenario", SCENARIOS)
    _choice(cfg, "solver", SOLVERS)
    _number(cfg, "nu", positive=True)
    _choice(cfg, "background.kind", [v.value for v in Variant])
    _number(cfg, "background.cbar", positive=True)
    _number(cfg, "background.shape.mode", positive=True, integer=True)
    _number(cfg, "background.shape.amplitude")
    _choice(cfg, "background.shape.phase", ("cos", "sin"))
    _choice(cfg, "background.envelope.kind", ("exponential", "rational"))
    for key in ("C1", "r1", "p"):
        _number(cfg, f"background.envelope.{key}", nonnegative=True)
    _number(cfg, "initial.rho.base", positive=True, allow_none=True)
    for key in ("rho", "u"):
        _number(cfg, f"initial.{key}.mode", positive=True, integer=True)
        _number(cfg, f"initial.{key}.amplitude")
    n = _number(cfg, "grid", positive=True, integer=True)
    if n < 8 or n % 2:
        raise ConfigError(f"key 'grid' must be even and >= 8, got {n}")
    m = _number(cfg, "particles", positive=True, integer=True)
    if m < 64 or m % 2:
        raise ConfigError(f"key 'particles' must be even and >= 64, got {m}")
    _number(cfg, "dt", positive=True)
    _number(cfg, "T", nonnegative=True)
    _number(cfg, "diag_every", positive=True, integer=True)
    _choice(cfg, "field_solve", ("label", "grid"))
    _number(cfg, "eulerian.dt", positive=True, allow_none=True)
    _number(cfg, "eulerian.courant", positive=True)
    _choice(cfg, "eulerian.speed", ("global", "local"))
    _number(cfg, "phaseplane.w0")
    _number(cfg, "phaseplane.s0", positive=True, allow_none=True)
    _number(cfg, "phaseplane.x")
    _number(cfg, "fit.floor", positive=True)
    if cfg["scenario"] == "phaseplane" and cfg["background"]["kind"] == "boltzmann":
        raise ConfigError("key 'background.kind': boltzmann has no prescribed c(t) for a phaseplane scenario")
    try:
        build_background(cfg)
    except ValueError as exc:
        raise ConfigError(f"section 'background': {exc}") from exc
    return cfg


def loads(text, source="<config>"):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return normalize(raw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), str(path))


def build_background(cfg):
    """Background profile described by ``cfg['background']``.

    For ``exponential_decay`` the shape is normalised to unit sup norm and
    its amplitude folded into ``C1``, so that ``|c - cbar| <= C1 exp(-r1 t)``
    holds with the stated constants.
    """
    b = cfg["background"]
    kind = Variant(b["kind"])
    if kind is Variant.CONSTANT:
        return BackgroundProfile.constant(b["cbar"])
    if kind is Variant.BOLTZMANN:
        return BackgroundProfile.boltzmann()
    sh, env = b["shape"], b["envelope"]
    amp = float(sh["amplitude"])
    if kind is Variant.EXPONENTIAL_DECAY:
        shape = TrigInterpolant.single_mode(sh["mode"], 1.0 if amp >= 0 else -1.0, sh["phase"])
        return BackgroundProfile.exponential_decay(b["cbar"], shape, C1=abs(amp) * env["C1"], r1=env["r1"])
    shape = TrigInterpolant.single_mode(sh["mode"], amp, sh["phase"])
    return BackgroundProfile.general_decay(b["cbar"], shape, Envelope(env["kind"], env["C1"], env["r1"], env["p"]))


def initial_fields(cfg, grid=None):
    """Initial ``(rho0, u0)`` on the config grid.

    ``rho0 = base + amplitude cos(2 pi mode x)`` with ``base`` defaulting to
    the background mean, so neutrality holds; ``u0 = amplitude sin(2 pi mode x)``.
    """
    grid = Grid(cfg["grid"]) if grid is None else grid
    r, u = cfg["initial"]["rho"], cfg["initial"]["u"]
    base = r["base"]
    if base is None:
        base = 1.0 if cfg["background"]["kind"] == "boltzmann" else cfg["background"]["cbar"]
    x = grid.nodes
    rho = base + r["amplitude"] * np.cos(2.0 * np.pi * r["mode"] * x)
    u0 = u["amplitude"] * np.sin(2.0 * np.pi * u["mode"] * x)
    return grid.field(rho), grid.field(u0)


def set_param(cfg, param, value):
    """Copy of ``cfg`` with a sweep parameter replaced."""
    paths = {
        "nu": "nu",
        "r1": "background.envelope.r1",
        "amplitude": "background.shape.amplitude",
        "cbar": "background.cbar",
    }
    if param not in paths:
        raise ConfigError(f"sweep parameter must be one of {', '.join(paths)}; got {param!r}")
    out = copy.deepcopy(cfg)
    node = out
    parts = paths[param].split(".")
    for p in parts[:-1]:
        node = node[p]
    node[parts[-1]] = float(value)
    return normalize(out)
