"""Experiment configuration: JSON schema, validation with line diagnostics, object builders."""
from __future__ import annotations

import copy
import hashlib
import json
from fractions import Fraction

import jsonschema

from .errors import ConfigError
from .field import PAdicField
from .linalg import Matrix, ProjPoint
from .measures import GaugeSpec, MatrixMeasure

SUBCOMMANDS = ("lyap", "gap", "variance", "lde", "wdist", "regularity", "family", "anderson", "hyperbolic")
# keys that never influence results; they are excluded from the config hash
RUNTIME_KEYS = ("workers", "out_dir")

_NUM = {"type": "number"}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1,
                                                    "items": {"type": ["number", "string"]}}}
_VECTOR = {"type": "array", "minItems": 1, "items": _NUM}
_POS_INT = {"type": "integer", "minimum": 1}

MEASURE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["atoms", "diag_lognormal", "rotation", "padic_diagonal", "sic", "anderson"]},
        "atoms": {"type": "array", "minItems": 1, "items": _MATRIX},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "mode": {"enum": ["SL", "GL"]},
        "field": {"type": "string", "pattern": "^(R|Q[0-9]+)$"},
        "prec": _POS_INT,
        "mean": _NUM,
        "sd": {"type": "number", "minimum": 0},
        "p": {"type": "integer", "minimum": 2},
        "ks": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "potential": {"type": "string"},
        "energy": _NUM,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "atoms"}}}, "then": {"required": ["atoms"]}},
        {"if": {"properties": {"kind": {"const": "diag_lognormal"}}}, "then": {"required": ["mean", "sd"]}},
        {"if": {"properties": {"kind": {"const": "padic_diagonal"}}}, "then": {"required": ["p", "ks"]}},
        {"if": {"properties": {"kind": {"const": "anderson"}}}, "then": {"required": ["potential", "energy"]}},
    ],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lyaplab experiment",
    "type": "object",
    "required": ["subcommand"],
    "properties": {
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "action": {"enum": ["sweep", "lde", "clt"]},
        "master_seed": {"type": "integer", "minimum": 0},
        "workers": _POS_INT,
        "out_dir": {"type": "string"},
        "measure": MEASURE_SCHEMA,
        "measure_b": MEASURE_SCHEMA,
        "family": {"type": "array", "minItems": 1, "items": MEASURE_SCHEMA},
        "estimator": {"enum": ["lyap_top", "gap", "lyap_sum2", "sigma_direct"]},
        "method": {"enum": ["norm_mean", "furstenberg_integral"]},
        "statistic": {"enum": ["norm", "vec_norm", "coeff"]},
        "n": _POS_INT,
        "n_grid": {"type": "array", "minItems": 1, "items": _POS_INT},
        "trials": _POS_INT,
        "eps": {"type": "number", "minimum": 0},
        "eps_rel": {"type": "number", "minimum": 0},
        "fit_models": {"type": "array", "items": {"enum": ["exp", "poly", "stretched"]}},
        "gauge": {"type": "string"},
        "solver": {"enum": ["exact", "sinkhorn"]},
        "reg": {"type": "number", "exclusiveMinimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "x0": _VECTOR,
        "f": _VECTOR,
        "coboundary": {"type": "boolean"},
        "chain_samples": _POS_INT,
        "n_inner": _POS_INT,
        "floor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "radii": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "n_centers": _POS_INT,
        "burn_in": {"type": "integer", "minimum": 0},
        "potential": {"type": "string"},
        "energy": _NUM,
        "emin": _NUM,
        "emax": _NUM,
        "count": _POS_INT,
        "rep": {"enum": ["octagon"]},
        "length_mode": {"enum": ["norm", "translation"]},
        "tmax": {"type": "number", "minimum": 0, "maximum": 0.2},
        "steps": _POS_INT,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"subcommand": {"enum": ["lyap", "gap", "variance", "regularity"]}}},
         "then": {"required": ["measure", "n", "trials"]}},
        {"if": {"properties": {"subcommand": {"const": "lde"}}},
         "then": {"required": ["measure", "trials", "n_grid", "statistic"], "oneOf": [{"required": ["eps"]}, {"required": ["eps_rel"]}]}},
        {"if": {"properties": {"subcommand": {"const": "wdist"}}},
         "then": {"required": ["measure", "measure_b", "gauge"]}},
        {"if": {"properties": {"subcommand": {"const": "family"}}},
         "then": {"required": ["family", "n", "trials"]}},
        {"if": {"properties": {"subcommand": {"const": "anderson"}}},
         "then": {"required": ["action", "potential", "n", "trials"]}},
        {"if": {"properties": {"subcommand": {"const": "hyperbolic"}}},
         "then": {"required": ["action", "n", "trials"]}},
    ],
}


def _line_of(text, path):
    """Best-effort 1-based line of a JSON path inside ``text`` (keys searched in order)."""
    if text is None:
        return None
    pos = 0
    for part in path:
        if isinstance(part, str):
            j = text.find(json.dumps(part), pos)
            if j < 0:
                break
            pos = j
    return text.count("\n", 0, pos) + 1


def validate(cfg: dict, text: str | None = None):
    """Raise :class:`ConfigError` listing every schema violation with its line (when known)."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        lines = []
        for e in errs:
            path = "/".join(map(str, e.absolute_path)) or "<root>"
            ln = _line_of(text, list(e.absolute_path))
            where = f"line {ln}: " if ln else ""
            lines.append(f"{where}{path}: {e.message}")
        raise ConfigError("\n".join(lines))
    extra = cfg.get("subcommand")
    if extra == "hyperbolic" and cfg.get("action") not in ("clt", "sweep"):
        raise ConfigError("hyperbolic: action must be 'clt' or 'sweep'")
    if extra == "anderson" and cfg.get("action") not in ("sweep", "lde"):
        raise ConfigError("anderson: action must be 'sweep' or 'lde'")


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("line 1: config must be a JSON object")
    return cfg, text


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in RUNTIME_KEYS}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sic_measure() -> MatrixMeasure:
    """Two-atom benchmark ``{[[2,1],[1,1]], [[1,1],[1,2]]}`` with equal weights."""
    return MatrixMeasure.from_atoms([Matrix([[2.0, 1.0], [1.0, 1.0]]), Matrix([[1.0, 1.0], [1.0, 2.0]])])


def _entry(x):
    return Fraction(x) if isinstance(x, str) else x



def build_measure(spec: dict) -> MatrixMeasure:
    spec = copy.deepcopy(spec)
    kind = spec["kind"]
    if kind == "sic":
        return sic_measure()
    if kind == "rotation":
        return MatrixMeasure.rotation()
    if kind == "diag_lognormal":
        return MatrixMeasure.diag_lognormal(spec["mean"], spec["sd"])
    if kind == "padic_diagonal":
        return MatrixMeasure.padic_diagonal(spec["p"], spec["ks"], spec.get("weights"), spec.get("prec", 32))
    if kind == "anderson":
        from .anderson import PotentialSpec, lifted_measure
        return lifted_measure(PotentialSpec.parse(spec["potential"]), spec["energy"])
    field = spec.get("field", "R")
    mode = spec.get("mode", "SL")
    if field == "R":
        atoms = [Matrix([[float(_entry(x)) for x in row] for row in a], mode=mode) for a in spec["atoms"]]
    else:
        fld = PAdicField(int(field[1:]), spec.get("prec", 32))
        atoms = [Matrix.from_rows(a, fld, mode) for a in spec["atoms"]]
    return MatrixMeasure.from_atoms(atoms, spec.get("weights"))


def point(v, dual=False):
    return None if v is None else ProjPoint(list(map(float, v)), dual=dual)


def gauge(text):
    return GaugeSpec.parse(text)
