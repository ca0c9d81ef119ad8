"""Scenario files, presets and environment overrides.

A scenario is a YAML mapping with the sections below; every key is optional
except where noted and unknown keys are rejected with their line number::

    name: my-run
    geometry: torus                 # torus | channel
    physics:       {gamma: -1.0, q: 0.0, theta: 2.0, N: 1.0}
    discretization: {n_v: 16, v_max: 6.0, dim: 1, k_max: 8,
                     n_x1: 16, kbar_max: 0, dt: 0.05, t_end: 10.0}
    initial:       {kind: cosine, amplitude: 1.0e-3, mode: [1, 0, 0], seed: 0, k_init: 2}
    solver:        {nonlinearity: full, field: true, collision: true, flux: upwind,
                    cfl: 0.9, R: 5.0, eps: 0.5, normalize: true}
    diagnostics:   {every: 1, record_moments: false, tol_cons: 1.0e-6,
                    fit_window: null, fit_functional: "f+E"}
    output:        {dir: out, checkpoints: true}
    sweep:         {kind: amplitude, amplitudes: [1.0e-3, 1.0e-2]}
                   # or {kind: refinement, levels: [[8, 0.1], [16, 0.05]]}

Environment overrides: ``VPLSOLVER_<SECTION>__<KEY>=value`` (top-level keys:
``VPLSOLVER_<KEY>``), values parsed as YAML scalars, e.g.
``VPLSOLVER_PHYSICS__GAMMA=-1``.  ``VPLSOLVER_CACHE_DIR`` is reserved for the
operator cache and is not an override.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import yaml

from .evolution import InitialCondition, SolverConfig

ENV_PREFIX = "VPLSOLVER_"
_RESERVED_ENV = {"VPLSOLVER_CACHE_DIR"}


class ConfigError(ValueError):
    """Malformed or invalid scenario; the message names the field/line."""


SCHEMA = {
    "name": None, "geometry": None,
    "physics": {"gamma", "q", "theta", "N"},
    "discretization": {"n_v", "v_max", "dim", "k_max", "n_x1", "kbar_max", "dt", "t_end"},
    "initial": {"kind", "amplitude", "mode", "seed", "k_init"},
    "solver": {"nonlinearity", "field", "collision", "flux", "cfl", "R", "eps", "normalize"},
    "diagnostics": {"every", "record_moments", "tol_cons", "fit_window", "fit_functional"},
    "output": {"dir", "checkpoints"},
    "sweep": {"kind", "amplitudes", "levels"},
}


@dataclass
class SweepSpec:
    kind: str = "amplitude"
    amplitudes: tuple = ()
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in ("amplitude", "refinement"):
            raise ConfigError(f"sweep.kind must be amplitude or refinement, got {self.kind!r}")
        self.amplitudes = tuple(float(a) for a in self.amplitudes)
        self.levels = tuple((int(n), float(dt)) for n, dt in self.levels)
        if self.kind == "amplitude" and not self.amplitudes:
            raise ConfigError("sweep.amplitudes must list at least one amplitude")
        if self.kind == "refinement" and len(self.levels) < 2:
            raise ConfigError("sweep.levels must list at least two [n_v, dt] pairs")


@dataclass
class Scenario:
    name: str
    solver: SolverConfig
    out_dir: str = "out"
    checkpoints: bool = True
    fit_window: tuple | None = None
    fit_functional: str = "f+E"
    sweep: SweepSpec | None = None
    raw: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESETS = {
    # soft regime with the time-decaying velocity weight (theta = -gamma)
    "torus-gamma-neg2-smalldata": {
        "name": "torus-gamma-neg2-smalldata", "geometry": "torus",
        "physics": {"gamma": -2.0, "q": 0.05, "theta": 2.0, "N": 1.0},
        "discretization": {"n_v": 16, "v_max": 6.0, "dim": 1, "k_max": 8, "dt": 0.05, "t_end": 10.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
    },
    "torus-gamma-neg1": {
        "name": "torus-gamma-neg1", "geometry": "torus",
        "physics": {"gamma": -1.0, "q": 0.0},
        "discretization": {"n_v": 16, "v_max": 6.0, "dim": 1, "k_max": 8, "dt": 0.05, "t_end": 10.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
    },
    "torus-gamma-0": {
        "name": "torus-gamma-0", "geometry": "torus",
        "physics": {"gamma": 0.0, "q": 0.0},
        "discretization": {"n_v": 16, "v_max": 6.0, "dim": 1, "k_max": 8, "dt": 0.05, "t_end": 10.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
    },
    "torus-linear-single-mode": {
        "name": "torus-linear-single-mode", "geometry": "torus",
        "physics": {"gamma": -1.0},
        "discretization": {"n_v": 8, "v_max": 6.0, "dim": 1, "k_max": 8, "dt": 0.05, "t_end": 40.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
        "solver": {"nonlinearity": "linearized"},
    },
    "channel-quasi1d": {
        "name": "channel-quasi1d", "geometry": "channel",
        "physics": {"gamma": -1.0},
        "discretization": {"n_v": 16, "v_max": 6.0, "n_x1": 16, "kbar_max": 0, "dt": 0.02, "t_end": 4.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
        "solver": {"flux": "upwind"},
        "diagnostics": {"tol_cons": 1e-5, "fit_functional": "f+E_alpha"},
    },
    "torus-amplitude-sweep": {
        "name": "torus-amplitude-sweep", "geometry": "torus",
        "physics": {"gamma": -1.0},
        "discretization": {"n_v": 8, "v_max": 6.0, "dim": 1, "k_max": 4, "dt": 0.05, "t_end": 40.0},
        "initial": {"kind": "cosine", "mode": [1, 0, 0]},
        "sweep": {"kind": "amplitude", "amplitudes": [1e-3, 1e-2, 1e-1, 0.5]},
    },
    "torus-refinement": {
        "name": "torus-refinement", "geometry": "torus",
        "physics": {"gamma": -1.0},
        "discretization": {"v_max": 6.0, "dim": 1, "k_max": 2, "t_end": 1.0},
        "initial": {"kind": "cosine", "amplitude": 1e-3, "mode": [1, 0, 0]},
        "diagnostics": {"record_moments": True},
        "sweep": {"kind": "refinement", "levels": [[8, 0.1], [16, 0.05]]},
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _check_keys(node, path: str = "") -> None:
    """Reject unknown keys, reporting the YAML line of the offending key."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"line {node.start_mark.line + 1}: {path or 'document'} must be a mapping")
    allowed = SCHEMA if not path else SCHEMA[path]
    for key_node, value_node in node.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        if key not in allowed:
            where = f"section {path!r}" if path else "top level"
            raise ConfigError(f"line {line}: unknown key {key!r} in {where}")
        if not path and isinstance(SCHEMA[key], set):
            _check_keys(value_node, key)


def parse_text(text: str, source: str = "<string>") -> dict:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{source}: {line}parse error: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        return {}
    try:
        _check_keys(node)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return yaml.safe_load(text) or {}


def parse_config(path) -> Scenario:
    """Read, validate and resolve a scenario file (with environment overrides)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_scenario(parse_text(text, str(path)))


def apply_env_overrides(raw: dict, environ=None) -> dict:
    raw = copy.deepcopy(raw)
    environ = os.environ if environ is None else environ
    for var in sorted(environ):
        if not var.startswith(ENV_PREFIX) or var in _RESERVED_ENV:
            continue
        parts = var[len(ENV_PREFIX):].lower().split("__")
        # keys are case-sensitive in the schema (``N``, ``R``); match case-insensitively
        if len(parts) == 1:
            key = _match(parts[0], [k for k, v in SCHEMA.items() if v is None])
            if key is None:
                raise ConfigError(f"environment override {var}: unknown key")
            raw[key] = yaml.safe_load(environ[var])
        elif len(parts) == 2:
            sec = _match(parts[0], [k for k, v in SCHEMA.items() if isinstance(v, set)])
            key = _match(parts[1], SCHEMA[sec]) if sec else None
            if key is None:
                raise ConfigError(f"environment override {var}: unknown key")
            raw.setdefault(sec, {})[key] = yaml.safe_load(environ[var])
        else:
            raise ConfigError(f"environment override {var}: use SECTION__KEY")
    return raw


def _match(name, choices):
    for c in choices:
        if c.lower() == name:
            return c
    return None


def build_scenario(raw: dict, environ=None, seed: int | None = None,
                   out_dir: str | None = None) -> Scenario:
    """Validate a raw mapping (after environment overrides) into a :class:`Scenario`."""
    raw = apply_env_overrides(raw, environ)
    for key, sub in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} at top level")
        if isinstance(SCHEMA[key], set):
            if not isinstance(sub, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            bad = set(sub) - SCHEMA[key]
            if bad:
                raise ConfigError(f"unknown key {sorted(bad)[0]!r} in section {key!r}")
    if seed is not None:
        raw.setdefault("initial", {})["seed"] = int(seed)
    if out_dir is not None:
        raw.setdefault("output", {})["dir"] = str(out_dir)
    phys = raw.get("physics", {})
    disc = raw.get("discretization", {})
    solv = raw.get("solver", {})
    diag = raw.get("diagnostics", {})
    out = raw.get("output", {})
    kw = dict(phys)
    kw.update(disc)
    kw.update(solv)
    if "geometry" in raw:
        kw["geometry"] = raw["geometry"]
    if "every" in diag:
        kw["diag_every"] = diag["every"]
    for k in ("record_moments", "tol_cons"):
        if k in diag:
            kw[k] = diag[k]
    try:
        kw["initial"] = InitialCondition(**raw.get("initial", {}))
        cfg = SolverConfig(**kw)
        cfg.n_steps  # noqa: B018  (validates t_end / dt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None
    window = diag.get("fit_window")
    if window is not None:
        if len(window) != 2:
            raise ConfigError("diagnostics.fit_window must be [t0, t1]")
        window = (float(window[0]), float(window[1]))
    sweep = SweepSpec(**raw["sweep"]) if raw.get("sweep") else None
    return Scenario(name=str(raw.get("name", "scenario")), solver=cfg,
                    out_dir=str(out.get("dir", "out")), checkpoints=bool(out.get("checkpoints", True)),
                    fit_window=window, fit_functional=str(diag.get("fit_functional", "f+E")),
                    sweep=sweep, raw=raw)
