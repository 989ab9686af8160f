"""Experiment configuration: TOML parsing, schema validation, object building.

Configs are validated against the JSON Schema shipped in
``cocyclekit/schema/config.schema.json`` (unknown keys rejected), then turned
into dynamics/cocycle/norm objects.  The fully resolved table, defaults
included, is echoed into every report so reports are self-describing.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import jsonschema

from cocyclekit import cocycle, dynamics, lyapnorm
from cocyclekit.errors import ConfigError

_DEFAULTS = {
    "norm": {"truncation": {"adaptive": 1e-8}, "guard": 1e-12},
    "sampling": {"horizon": 256},
    "tolerances": {
        "invariance_residual": 1e-10,
        "orthogonality_defect": 1e-8,
        "preservation": 1e-9,
        "angle": 1e-6,
        "conformality": 1e-8,
        "exponent_gap": 1e-3,
        "slope_threshold": 0.02,
        "det_consistency": 1e-8,
    },
    "pipeline": {"conf_horizon": 64},
    "output": {"dir": "out", "full": False, "verbosity": "info"},
}

_BASE_KINDS = ("torus", "periodic", "shift")
_COCYCLE_KINDS = (
    "constant", "per_orbit", "schrodinger", "scalar_rotation",
    "block_diagonal", "scaled", "conjugated",
)


def schema():
    with resources.files("cocyclekit.schema").joinpath("config.schema.json").open("rb") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class Tolerances:
    invariance_residual: float = 1e-10
    orthogonality_defect: float = 1e-8
    preservation: float = 1e-9
    angle: float = 1e-6
    conformality: float = 1e-8
    exponent_gap: float = 1e-3
    slope_threshold: float = 0.02
    det_consistency: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    base: object
    cocycle: object
    norm: lyapnorm.NormConfig
    count: int
    seed: int
    horizon: int
    horizons: tuple
    tolerances: Tolerances
    bundle_horizon: object  # int or None
    conf_horizon: int
    out_dir: str
    full: bool
    verbosity: str
    strict: bool
    resolved: dict = field(repr=False, default=None)


def _check_kinds(table):
    """Name the offending field before jsonschema's oneOf noise kicks in."""
    base = table.get("base")
    if isinstance(base, dict):
        kind = base.get("kind")
        if kind is None:
            raise ConfigError("config error at base.kind: field is required")
        if kind not in _BASE_KINDS:
            raise ConfigError(
                f"config error at base.kind: {kind!r} is not one of {_BASE_KINDS}"
            )

    def walk(coc, path):
        if not isinstance(coc, dict):
            return
        kind = coc.get("kind")
        if kind is None:
            raise ConfigError(f"config error at {path}.kind: field is required")
        if kind not in _COCYCLE_KINDS:
            raise ConfigError(
                f"config error at {path}.kind: {kind!r} is not one of {_COCYCLE_KINDS}"
            )
        for i, sub in enumerate(coc.get("blocks", [])):
            walk(sub, f"{path}.blocks[{i}]")
        if "inner" in coc:
            walk(coc["inner"], f"{path}.inner")

    if "cocycle" in table:
        walk(table["cocycle"], "cocycle")


def _validate(table):
    _check_kinds(table)
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(table), key=jsonschema.exceptions.relevance)
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        path = ".".join(str(p) for p in best.absolute_path) or "(top level)"
        raise ConfigError(f"config error at {path}: {best.message}")


def _merged(table):
    out = copy.deepcopy(table)
    for section, defaults in _DEFAULTS.items():
        got = dict(defaults)
        got.update(out.get(section, {}))
        out[section] = got
    return out


def _build_trig(tbl):
    tbl = tbl or {}
    return cocycle.TrigPoly(
        const=float(tbl.get("const", 0.0)),
        cos=tuple(float(x) for x in tbl.get("cos", ())),
        sin=tuple(float(x) for x in tbl.get("sin", ())),
        coord=int(tbl.get("coord", 0)),
    )


def build_cocycle(tbl):
    kind = tbl["kind"]
    if kind == "constant":
        return cocycle.Constant(tbl["matrix"])
    if kind == "per_orbit":
        return cocycle.PerOrbitPoint(tuple(tbl["matrices"]))
    if kind == "schrodinger":
        return cocycle.Schrodinger(float(tbl["energy"]), float(tbl.get("coupling", 0.0)))
    if kind == "scalar_rotation":
        return cocycle.ScalarTimesRotation(
            log_scale=_build_trig(tbl.get("log_scale")),
            angle=_build_trig(tbl.get("angle")),
        )
    if kind == "block_diagonal":
        return cocycle.BlockDiagonal(tuple(build_cocycle(b) for b in tbl["blocks"]))
    if kind == "scaled":
        return cocycle.Scaled(_build_trig(tbl["log_scale"]), build_cocycle(tbl["inner"]))
    if kind == "conjugated":
        return cocycle.Conjugated(tbl["matrix"], build_cocycle(tbl["inner"]))
    raise ConfigError(f"unknown cocycle kind {kind!r}")


def build_base(tbl):
    kind = tbl["kind"]
    if kind == "torus":
        return dynamics.TorusTranslation(tbl["alpha"], irrational=tbl.get("irrational", True))
    if kind == "periodic":
        return dynamics.PeriodicOrbit(tbl["period"])
    if kind == "shift":
        return dynamics.FullShift(tbl["alphabet"], radius=tbl.get("radius", 32))
    raise ConfigError(f"unknown base kind {kind!r}")


def build_norm(tbl):
    trunc_tbl = tbl["truncation"]
    if "fixed" in trunc_tbl:
        trunc = lyapnorm.Fixed(int(trunc_tbl["fixed"]))
    else:
        trunc = lyapnorm.Adaptive(float(trunc_tbl["adaptive"]))
    return lyapnorm.NormConfig(
        epsilon=float(tbl["epsilon"]), truncation=trunc, guard=float(tbl["guard"])
    )


def load_config(path, seed=None, out_dir=None, full=None, strict=False):
    """Parse, validate and build an ExperimentConfig from a TOML file.

    CLI overrides (seed, out_dir, full) are applied after validation and are
    reflected in the resolved echo.
    """
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")
    _validate(table)
    resolved = _merged(table)
    if seed is not None:
        resolved["sampling"]["seed"] = int(seed)
    if out_dir is not None:
        resolved["output"]["dir"] = str(out_dir)
    if full is not None:
        resolved["output"]["full"] = bool(full)
    resolved["strict"] = bool(strict)

    tol = Tolerances(**resolved["tolerances"])
    sampling = resolved["sampling"]
    horizons = tuple(int(h) for h in sampling.get("horizons", ()))
    return ExperimentConfig(
        base=build_base(resolved["base"]),
        cocycle=build_cocycle(resolved["cocycle"]),
        norm=build_norm(resolved["norm"]),
        count=int(sampling["count"]),
        seed=int(sampling["seed"]),
        horizon=int(sampling["horizon"]),
        horizons=horizons,
        tolerances=tol,
        bundle_horizon=resolved["pipeline"].get("bundle_horizon"),
        conf_horizon=int(resolved["pipeline"]["conf_horizon"]),
        out_dir=resolved["output"]["dir"],
        full=bool(resolved["output"]["full"]),
        verbosity=resolved["output"]["verbosity"],
        strict=bool(strict),
        resolved=resolved,
    )
