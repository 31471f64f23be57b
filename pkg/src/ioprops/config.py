"""Experiment configuration: INI-style ``key = value`` files with sections.

Schema (unknown sections or keys are rejected)::

    [plant]
    type = impulse | statespace | mimo | random
    file = other.cfg          ; read [plant] from another file instead
    id = label                ; plant_id in reports (default: derived)
    horizon = 1000            ; n
    taps = 1 0.5 0.25         ; impulse: zero-padded to horizon
    A = -0.1 1; -1 0.1        ; statespace: rows separated by ';'
    B = 0; 1
    C = 0 1
    D = 0.01
    dt = 0.01                 ; continuous models are ZOH-discretized
    time_domain = continuous | discrete
    blocks = 1 0 | 0 0; 0 0 | 1 0   ; mimo: '|' between blocks, ';' between rows
    seed = 1                  ; random
    order = 20
    channels = 1

    [noise]
    kind = none | additive_gaussian | multiplicative_uniform
    sigma = 0.0
    epsilon_bar = 0.0

    [run]
    property = gain | passivity | cone | all
    validate = true
    seed = 0                  ; noise seed (CLI --seed overrides)
    budget = 10000            ; hard sample budget per quantity (optional)
    out = results             ; output directory (CLI --out overrides)
    figures = true

    [gain] / [passivity] / [cone]
    method, alpha, rel_tol, patience, grad_tol, max_samples, max_iter,
    u0 = sine | constant, u0_offset, t_end, flow_rel_tol, flow_abs_tol,
    max_rhs_evals; passivity adds estimate_nu, cone adds c0

    [compare]
    property = gain | passivity | cone
    methods = power, pg_power
    budgets = 50, 100, 200
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic import CONE_METHODS
from .errors import ConfigError
from .estimator import (
    DEFAULT_GRAD_TOL,
    DEFAULT_MAX_SAMPLES,
    DEFAULT_PATIENCE,
    DEFAULT_REL_TOL,
    EstimatorConfig,
    normalize,
)
from .gain import GAIN_METHODS
from .lti import ImpulseResponse, MimoPlant, StateSpaceModel, random_mimo_plant, random_stable_plant, zoh_discretize
from .passivity import PASSIVITY_METHODS
from .probe import NOISE_KINDS, NoiseModel

BUNDLED_DIR = Path(__file__).parent / "configs"
PROPERTIES = ("gain", "passivity", "cone")
METHODS = {"gain": GAIN_METHODS, "passivity": PASSIVITY_METHODS, "cone": CONE_METHODS}
DEFAULT_METHOD = {"gain": "power", "passivity": "gradient_descent_linesearch", "cone": "uzawa"}

_PLANT_KEYS = {"type", "file", "id", "horizon", "taps", "A", "B", "C", "D", "dt", "time_domain",
               "blocks", "seed", "order", "channels"}
_NOISE_KEYS = {"kind", "sigma", "epsilon_bar"}
_RUN_KEYS = {"property", "validate", "seed", "budget", "out", "figures"}
_EST_KEYS = {"method", "alpha", "rel_tol", "patience", "grad_tol", "max_samples", "max_iter", "u0",
             "u0_offset", "t_end", "flow_rel_tol", "flow_abs_tol", "max_rhs_evals"}
_SCHEMA = {
    "plant": _PLANT_KEYS,
    "noise": _NOISE_KEYS,
    "run": _RUN_KEYS,
    "gain": _EST_KEYS,
    "passivity": _EST_KEYS | {"estimate_nu"},
    "cone": _EST_KEYS | {"c0"},
    "compare": {"property", "methods", "budgets"},
}


@dataclass
class ExperimentConfig:
    plant: object
    plant_id: str
    noise: NoiseModel
    properties: tuple
    validate: bool
    seed: int
    budget: int | None
    out: str | None
    figures: bool
    estimators: dict
    compare: dict | None
    resolved: dict = field(default_factory=dict)


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"), strict=True)
    cp.optionxform = str
    return cp


def resolve_path(path) -> Path:
    """Return ``path`` if it exists, else a bundled config of the same name."""
    p = Path(path)
    if p.is_file():
        return p
    bundled = BUNDLED_DIR / p.name
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {path}")


def read_sections(path):
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
    sections = {}
    for name in cp.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{name}]")
        unknown = set(cp[name]) - _SCHEMA[name]
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
        sections[name] = dict(cp[name])
    return sections


def _float(sec, key, default=None, name=""):
    if key not in sec:
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"[{name}] {key}: expected a number, got {sec[key]!r}") from None


def _int(sec, key, default=None, name=""):
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"[{name}] {key}: expected an integer, got {sec[key]!r}") from None


def _bool(sec, key, default, name=""):
    if key not in sec:
        return default
    v = sec[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{name}] {key}: expected a boolean, got {sec[key]!r}")


def parse_vector(text, name="vector"):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{name}: could not parse numbers from {text!r}") from None
    if not vals:
        raise ConfigError(f"{name}: empty")
    return np.array(vals)


def parse_matrix(text, name="matrix"):
    rows = [parse_vector(r, name) for r in text.split(";") if r.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise ConfigError(f"{name}: rows must be non-empty and equally long")
    return np.vstack(rows)


def build_plant(sec, base_dir=Path(".")):
    """Build a plant and its id from a ``[plant]`` section."""
    if "file" in sec:
        extra = set(sec) - {"file", "id"}
        if extra:
            raise ConfigError(f"[plant] file= cannot be combined with {', '.join(sorted(extra))}")
        path = Path(sec["file"])
        if not path.is_absolute():
            path = base_dir / path
        inner = read_sections(resolve_path(path)).get("plant")
        if inner is None:
            raise ConfigError(f"{path}: no [plant] section")
        plant, pid = build_plant(inner, Path(path).parent)
        return plant, sec.get("id", pid)
    kind = sec.get("type")
    n = _int(sec, "horizon", None, "plant")
    if n is not None and n < 1:
        raise ConfigError("[plant] horizon must be positive")
    try:
        if kind == "impulse":
            taps = parse_vector(sec.get("taps", ""), "[plant] taps")
            if n is not None:
                if taps.size > n:
                    raise ConfigError("[plant] more taps than horizon")
                taps = np.concatenate([taps, np.zeros(n - taps.size)])
            return ImpulseResponse(taps), sec.get("id", f"impulse_n{taps.size}")
        if n is None:
            raise ConfigError(f"[plant] type={kind} needs horizon")
        if kind == "statespace":
            td = sec.get("time_domain", "continuous")
            model = StateSpaceModel(
                parse_matrix(sec.get("A", ""), "[plant] A"),
                parse_matrix(sec.get("B", ""), "[plant] B"),
                parse_matrix(sec.get("C", ""), "[plant] C"),
                _float(sec, "D", 0.0, "plant"),
                td,
            )
            if td == "continuous":
                dt = _float(sec, "dt", None, "plant")
                if dt is None:
                    raise ConfigError("[plant] continuous models need dt")
                return zoh_discretize(model, dt, n), sec.get("id", f"statespace_n{n}")
            return model.impulse_response(n), sec.get("id", f"statespace_n{n}")
        if kind == "mimo":
            grid = [[parse_vector(b, "[plant] blocks") for b in row.split("|")]
                    for row in sec.get("blocks", "").split(";") if row.strip()]
            m = len(grid)
            if m == 0 or any(len(row) != m for row in grid):
                raise ConfigError("[plant] blocks must form a square grid")
            taps = np.zeros((m, m, n))
            for i in range(m):
                for j in range(m):
                    if grid[i][j].size > n:
                        raise ConfigError("[plant] block has more taps than horizon")
                    taps[i, j, :grid[i][j].size] = grid[i][j]
            return MimoPlant(taps), sec.get("id", f"mimo{m}_n{n}")
        if kind == "random":
            seed = _int(sec, "seed", 0, "plant")
            order = _int(sec, "order", 10, "plant")
            m = _int(sec, "channels", 1, "plant")
            if seed < 0 or order < 1 or m < 1:
                raise ConfigError("[plant] random plants need seed >= 0, order >= 1, channels >= 1")
            pid = sec.get("id", f"random_s{seed}_o{order}_n{n}" + (f"_m{m}" if m > 1 else ""))
            if m == 1:
                return random_stable_plant(seed, order, n), pid
            return random_mimo_plant(seed, m, order, n), pid
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"[plant] {exc}") from None
    raise ConfigError(f"[plant] type must be impulse, statespace, mimo or random, got {kind!r}")


def _estimator(sec, prop, shape, method=None):
    name = prop
    method = method or sec.get("method", DEFAULT_METHOD[prop])
    if method not in METHODS[prop]:
        raise ConfigError(f"[{prop}] method {method!r} not one of {', '.join(METHODS[prop])}")
    u0_kind = sec.get("u0", "constant" if prop == "passivity" else "sine")
    if u0_kind not in ("sine", "constant"):
        raise ConfigError(f"[{prop}] u0 must be sine or constant")
    offset = _float(sec, "u0_offset", 0.0, name)
    u0 = None
    if u0_kind != ("constant" if prop == "passivity" else "sine") or offset != 0.0:
        n = shape[-1]
        base = np.sin(np.arange(1, n + 1, dtype=float)) if u0_kind == "sine" else np.ones(n)
        u0 = normalize(np.broadcast_to(base + offset, shape).copy())
    max_iter = _int(sec, "max_iter", None, name)
    kwargs = dict(
        method=method,
        alpha=_float(sec, "alpha", 0.01, name),
        rel_tol=_float(sec, "rel_tol", DEFAULT_REL_TOL, name),
        patience=_int(sec, "patience", DEFAULT_PATIENCE, name),
        grad_tol=_float(sec, "grad_tol", DEFAULT_GRAD_TOL, name),
        max_samples=_int(sec, "max_samples", DEFAULT_MAX_SAMPLES, name),
        max_iter=max_iter,
        u0=u0,
        t_end=_float(sec, "t_end", 50.0, name),
        flow_rel_tol=_float(sec, "flow_rel_tol", 1e-8, name),
        flow_abs_tol=_float(sec, "flow_abs_tol", 1e-10, name),
        max_rhs_evals=_int(sec, "max_rhs_evals", 200_000, name),
    )
    if prop == "passivity":
        kwargs["estimate_nu"] = _bool(sec, "estimate_nu", False, name)
    if prop == "cone":
        kwargs["c0"] = _float(sec, "c0", 0.0, name)
    try:
        return EstimatorConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{prop}] {exc}") from None


def _list(text):
    return [x.strip() for x in text.replace(";", ",").split(",") if x.strip()]


def load_config(path, seed=None, out=None) -> ExperimentConfig:
    """Parse and validate a config file; ``seed`` and ``out`` override it."""
    path = resolve_path(path)
    secs = read_sections(path)
    if "plant" not in secs:
        raise ConfigError(f"{path}: missing [plant] section")
    plant, pid = build_plant(secs["plant"], path.parent)
    shape = (plant.horizon,) if plant.channels == 1 else (plant.channels, plant.horizon)

    run = secs.get("run", {})
    prop = run.get("property", "gain")
    if prop not in PROPERTIES + ("all",):
        raise ConfigError(f"[run] property must be one of gain, passivity, cone, all; got {prop!r}")
    props = PROPERTIES if prop == "all" else (prop,)
    if plant.channels > 1 and set(props) - {"gain"}:
        raise ConfigError("MIMO plants support the gain property only")
    run_seed = _int(run, "seed", 0, "run") if seed is None else int(seed)
    if run_seed < 0:
        raise ConfigError("seed must be non-negative")
    budget = _int(run, "budget", None, "run")
    if budget is not None and budget < 1:
        raise ConfigError("[run] budget must be positive")

    nsec = secs.get("noise", {})
    kind = nsec.get("kind", "none")
    if kind not in NOISE_KINDS:
        raise ConfigError(f"[noise] kind must be one of {', '.join(NOISE_KINDS)}")
    try:
        noise = NoiseModel(kind, _float(nsec, "sigma", 0.0, "noise"), _float(nsec, "epsilon_bar", 0.0, "noise"),
                           run_seed)
    except ValueError as exc:
        raise ConfigError(f"[noise] {exc}") from None

    estimators = {p: _estimator(secs.get(p, {}), p, shape) for p in props}
    for p in PROPERTIES:
        if p in secs and p not in props and "compare" not in secs:
            raise ConfigError(f"section [{p}] given but [run] property is {prop}")

    compare = None
    if "compare" in secs:
        csec = secs["compare"]
        cprop = csec.get("property", "gain")
        if cprop not in PROPERTIES:
            raise ConfigError("[compare] property must be gain, passivity or cone")
        methods = _list(csec.get("methods", ""))
        if len(methods) < 2:
            raise ConfigError("[compare] needs at least two methods")
        for m in methods:
            if m not in METHODS[cprop]:
                raise ConfigError(f"[compare] method {m!r} not one of {', '.join(METHODS[cprop])}")
        try:
            budgets = [int(b) for b in _list(csec.get("budgets", ""))]
        except ValueError:
            raise ConfigError("[compare] budgets must be integers") from None
        if not budgets or any(b <= 0 for b in budgets):
            raise ConfigError("[compare] budgets must be a non-empty list of positive integers")
        compare = {
            "property": cprop,
            "methods": methods,
            "budgets": budgets,
            "configs": {m: _estimator(secs.get(cprop, {}), cprop, shape, method=m) for m in methods},
        }

    out_dir = out if out is not None else run.get("out") or os.environ.get("IOPROPS_OUT") or "ioprops_out"
    resolved = _resolve_for_meta(secs, prop, run_seed, budget, run)
    return ExperimentConfig(plant, pid, noise, props, _bool(run, "validate", True, "run"), run_seed, budget,
                            out_dir, _bool(run, "figures", True, "run"), estimators, compare, resolved)


def _resolve_for_meta(secs, prop, seed, budget, run):
    resolved = {name: dict(sorted(vals.items())) for name, vals in secs.items()}
    r = resolved.setdefault("run", {})
    r["property"] = prop
    r["seed"] = str(seed)
    r["validate"] = run.get("validate", "true")
    r["figures"] = run.get("figures", "true")
    if budget is not None:
        r["budget"] = str(budget)
    r.pop("out", None)
    for p in PROPERTIES if prop == "all" else (prop,):
        sec = resolved.setdefault(p, {})
        sec.setdefault("method", DEFAULT_METHOD[p])
    return {k: resolved[k] for k in sorted(resolved)}


def write_meta(resolved, path, version):
    cp = _parser()
    cp["artifact"] = {"name": "ioprops", "version": version}
    for name, vals in resolved.items():
        cp[name] = vals
    with open(path, "w") as fh:
        cp.write(fh)
