"""Run configuration: defaults, JSON-schema validation and a reproducibility hash."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import warnings
from typing import Optional

import jsonschema

from .core import (CODATA, HELIUM_MASS_U, MICROMAGNET, GasSpec, MassPolicy, PhysicalConstants,
                   SphereSpec, ValidationError)

LIGHT_SPEED = "light_speed"

_pos = {"type": "number", "exclusiveMinimum": 0}
_temp = {"oneOf": [_pos, {"enum": ["inf"]}]}
_grid = {
    "type": "object", "additionalProperties": False,
    "properties": {"min": _pos, "max": _pos,
                   "points": {"type": "integer", "minimum": 2},
                   "log": {"type": "boolean"}},
}
_rate = {"oneOf": [_pos, {"enum": [LIGHT_SPEED]}]}
_policy = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {"kind": {"enum": list(MassPolicy.KINDS)},
                   "mass_u": _pos, "density": _pos},
}


def _block(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA = _block({
    "sphere": _block({"radius": _pos, "density": _pos,
                      "saturation_field": {"oneOf": [_pos, {"type": "null"}]}}),
    "gas": _block({"molecular_mass_u": _pos, "temperature": _pos, "gauge_temperature": _pos}),
    "constants": _block({k: _pos for k in CODATA.to_dict()}),
    "gamma0": _block({"linewidth_hz": _pos,
                      "confidence": {"type": "number", "exclusiveMinimum": 0.5,
                                     "exclusiveMaximum": 1}}),
    "dcsl": _block({"T_c": {"type": "array", "items": _temp, "minItems": 1},
                    "m_a_u": _pos, "grid": _grid,
                    "point": _block({"lambda": _pos, "r_c": _pos, "T_c": _temp})}),
    "ddp": _block({"mass_policies": {"type": "array", "items": _policy, "minItems": 1},
                   "regime": {"enum": ["uniform", "granular"]},
                   "require_fit": {"type": "boolean"},
                   "t_range": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                   "grid": _grid,
                   "point": _block({"R0": _pos, "T_DP": _temp, "mass_policy": _policy})}),
    "cgf": _block({"corr_rates": {"type": "array", "items": _rate, "minItems": 1},
                   "grid": _grid,
                   "point": _block({"xi": {"type": "number", "minimum": 0}, "r_c": _pos,
                                    "corr_rate": _rate})}),
    "output": _block({"dir": {"type": "string"},
                      "threads": {"type": "integer", "minimum": 1}}),
})

DEFAULTS = {
    "sphere": MICROMAGNET.to_dict(),
    "gas": {"molecular_mass_u": HELIUM_MASS_U, "temperature": 4.2, "gauge_temperature": 300.0},
    "constants": {},
    "gamma0": {"linewidth_hz": 9e-6, "confidence": 0.9},
    "dcsl": {"T_c": [1.0, 1e-3, 1e-6, 1e-9], "m_a_u": 100.0,
             "grid": {"min": 1e-9, "max": 1e-3, "points": 200, "log": True},
             "point": {"lambda": 1.0, "r_c": 1e-7, "T_c": 1.0}},
    "ddp": {"mass_policies": [{"kind": "sphere_of_R0prime"}], "regime": "uniform",
            "require_fit": True, "t_range": [1e-30, 1e10],
            "grid": {"min": 1e-9, "max": 1e-4, "points": 200, "log": True},
            "point": {"R0": 1e-7, "T_DP": 1e-13, "mass_policy": {"kind": "sphere_of_R0prime"}}},
    "cgf": {"corr_rates": [1e16, 1e14, 1e12, 1e10, LIGHT_SPEED],
            "grid": {"min": 1e-9, "max": 1.0, "points": 200, "log": True},
            "point": {"xi": 7e-23, "r_c": 1e-2, "corr_rate": LIGHT_SPEED}},
    "output": {"dir": "out", "threads": 1},
}

# keys that change where and how fast results are produced, not what they are
_UNHASHED = ("output",)


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "constants":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _error_field(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path = ".".join(filter(None, [path, extra[0] if extra else ""]))
    return path or "config"


def _strip_unknown(doc, schema):
    """Drop keys the schema does not know about (lax mode), warning for each."""
    if not isinstance(doc, dict) or "properties" not in schema:
        return doc
    out = {}
    for k, v in doc.items():
        if k not in schema["properties"]:
            warnings.warn(f"ignoring unknown config key {k!r}", UserWarning, stacklevel=3)
            continue
        out[k] = _strip_unknown(v, schema["properties"][k])
    return out


def validate_config(doc: dict, strict: bool = True) -> dict:
    """Validate a user document and return it merged over :data:`DEFAULTS`."""
    if not isinstance(doc, dict):
        raise ValidationError("config", "top level must be a JSON object")
    if not strict:
        doc = _strip_unknown(doc, SCHEMA)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ValidationError(_error_field(errors[0]), errors[0].message)
    resolved = _merge(DEFAULTS, doc)
    for name in ("dcsl", "ddp", "cgf"):
        g = resolved[name]["grid"]
        if not g["min"] < g["max"]:
            raise ValidationError(f"{name}.grid", "min must be below max")
    lo, hi = resolved["ddp"]["t_range"]
    if not lo < hi:
        raise ValidationError("ddp.t_range", "min must be below max")
    # surface physical-domain errors now rather than mid-run
    build_sphere(resolved)
    build_gas(resolved)
    build_constants(resolved)
    return resolved


def read_document(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("config", "top level must be a JSON object")
    return doc


def load_config(path: Optional[str], strict: bool = True) -> dict:
    return validate_config({} if path is None else read_document(path), strict)


def config_hash(resolved: dict) -> str:
    """sha256 of the canonical JSON form of the resolved config (output block excluded)."""
    body = {k: v for k, v in resolved.items() if k not in _UNHASHED}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_temperature(value) -> float:
    return math.inf if value == "inf" else float(value)


def parse_rate(value) -> Optional[float]:
    return None if value == LIGHT_SPEED else float(value)


def build_constants(cfg: dict) -> PhysicalConstants:
    return CODATA.with_overrides(**cfg["constants"]) if cfg["constants"] else CODATA


def build_sphere(cfg: dict) -> SphereSpec:
    s = cfg["sphere"]
    return SphereSpec(s["radius"], s["density"], s.get("saturation_field"))


def build_gas(cfg: dict) -> GasSpec:
    g = cfg["gas"]
    u = build_constants(cfg).atomic_mass_unit
    return GasSpec(g["molecular_mass_u"] * u, g["temperature"], g["gauge_temperature"])


def build_mass_policy(block: dict, cfg: dict) -> MassPolicy:
    kind = block["kind"]
    if kind == "nucleon":
        return MassPolicy.nucleon()
    if kind == "fixed_nuclear":
        mass_u = block.get("mass_u")
        u = build_constants(cfg).atomic_mass_unit
        return MassPolicy.fixed_nuclear(None if mass_u is None else mass_u * u)
    return MassPolicy.sphere_of_R0prime(block.get("density", cfg["sphere"]["density"]))
