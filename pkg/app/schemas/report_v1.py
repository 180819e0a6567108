"""
verification-report.v1 JSON Schema Implementation

Schemas for the three JSON artifacts of the pipeline (protocol file, run
config file, verification report) with builders and validators on top of
jsonschema.
"""

import hashlib
import json
from typing import Any, Dict, List, Mapping

import jsonschema

from ..errors import ProtocolError, SchemaError

REPORT_VERSION = "verification-report.v1"

_RATE = {"type": "number", "minimum": 0, "maximum": 100}

_KERNEL_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"type": "string", "enum": ["polynomial", "rbf", "linear"]},
        "a": {"type": "number"},
        "b": {"type": "number"},
        "d": {"type": "integer", "minimum": 1},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
    },
}

_LEARN_SCHEMA = {
    "type": "object",
    "properties": {
        "mode": {"type": "string", "enum": ["dinkelbach", "fixed_alpha"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
    },
}

PROTOCOL_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "verification-protocol",
    "type": "object",
    "required": ["clients", "impostors", "roles"],
    "properties": {
        "clients": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "impostors": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "roles": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "string", "enum": ["train", "evaluation", "test"]},
            },
        },
    },
}

RUN_CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "run-config",
    "type": "object",
    "required": ["source", "kernel"],
    "additionalProperties": False,
    "properties": {
        "source": {
            "type": "object",
            "oneOf": [
                {
                    "required": ["synthetic"],
                    "not": {"required": ["files"]},
                },
                {
                    "required": ["files"],
                    "not": {"required": ["synthetic"]},
                },
            ],
            "properties": {
                "synthetic": {
                    "type": "object",
                    "required": ["clients", "impostors", "per", "dim", "sep"],
                    "properties": {
                        "clients": {"type": "integer", "minimum": 2},
                        "impostors": {"type": "integer", "minimum": 0},
                        "per": {"type": "integer", "minimum": 4},
                        "dim": {"type": "integer", "minimum": 1},
                        "sep": {"type": "number", "exclusiveMinimum": 0},
                        "warp": {"type": "string", "enum": ["none", "quadratic-lift", "radial"]},
                    },
                },
                "files": {
                    "type": "object",
                    "required": ["samples", "protocol"],
                    "properties": {
                        "samples": {"type": "string"},
                        "protocol": {"type": "string"},
                    },
                },
            },
        },
        "kernel": {"oneOf": [{"type": "string"}, _KERNEL_SCHEMA]},
        "learn": _LEARN_SCHEMA,
        "baseline": {"type": "boolean"},
        "modes": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "string", "enum": ["OnC", "OnI"]},
        },
        "seed": {"type": "integer"},
        "heq": {
            "type": "object",
            "required": ["width", "height"],
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "properties": {
                "report": {"type": "string"},
                "roc": {"type": ["string", "null"]},
            },
        },
    },
}

REPORT_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": REPORT_VERSION,
    "type": "object",
    "additionalProperties": False,
    "required": [
        "version", "method", "mode", "threshold",
        "eval_far", "eval_frr", "test_far", "test_frr", "test_ter",
        "kernel", "learn", "alpha", "mu_summary", "m_b", "claims", "digest",
    ],
    "properties": {
        "version": {"const": REPORT_VERSION},
        "method": {"type": "string", "enum": ["baseline", "learned"]},
        "mode": {"type": "string", "enum": ["OnC", "OnI"]},
        "threshold": {"type": "number", "minimum": 0},
        "eval_far": _RATE,
        "eval_frr": _RATE,
        "test_far": _RATE,
        "test_frr": _RATE,
        "test_ter": {"type": "number", "minimum": 0, "maximum": 200},
        "kernel": _KERNEL_SCHEMA,
        "learn": {
            "type": "object",
            "required": ["mode"],
            "properties": {
                "mode": {"type": "string", "enum": ["dinkelbach", "fixed_alpha", "baseline"]},
                "alpha": {"type": ["number", "null"]},
                "tol": {"type": ["number", "null"]},
                "max_iter": {"type": ["integer", "null"]},
                "iterations": {"type": "integer", "minimum": 0},
                "stop_reason": {"type": ["string", "null"]},
            },
        },
        "alpha": {"type": ["number", "null"]},
        "mu_summary": {
            "type": "object",
            "required": ["p", "beta", "ratio_trace"],
            "properties": {
                "p": {"type": "integer", "minimum": 1},
                "beta": {"type": "number"},
                "ratio_trace": {"type": ["number", "null"]},
                "min_abs": {"type": "number"},
                "max_abs": {"type": "number"},
                "l2_norm": {"type": "number"},
            },
        },
        "m_b": {"type": "integer", "minimum": 1},
        "claims": {
            "type": "object",
            "required": ["eval_genuine", "eval_impostor", "test_genuine", "test_impostor"],
            "additionalProperties": {"type": "integer", "minimum": 0},
        },
        "digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    },
}


def content_digest(payload: Mapping[str, Any]) -> str:
    """sha256 over the canonical JSON form of a payload, excluding any digest field."""
    body = {k: v for k, v in payload.items() if k != "digest"}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def create_report_v1_output(fields: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Create a verification-report.v1 object from report fields.

    Args:
        fields: Report values (mode, threshold, rates, kernel, learn, ...)

    Returns:
        Dictionary conforming to verification-report.v1, digest included
    """
    output = {"version": REPORT_VERSION}
    for key in REPORT_SCHEMA["required"]:
        if key in ("version", "digest"):
            continue
        output[key] = fields[key]
    output["digest"] = content_digest(output)
    return output


def _first_error(validator: jsonschema.Draft202012Validator, data: Any) -> str:
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if not errors:
        return ""
    err = errors[0]
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate_report_v1(data: Any) -> bool:
    """Validate one report object; raises SchemaError when invalid."""
    message = _first_error(jsonschema.Draft202012Validator(REPORT_SCHEMA), data)
    if message:
        raise SchemaError(f"Invalid {REPORT_VERSION} report: {message}")
    return True


def validate_report_array(data: Any) -> List[Dict[str, Any]]:
    if not isinstance(data, list):
        raise SchemaError("Report file must contain a JSON array")
    for item in data:
        validate_report_v1(item)
    return data


def validate_protocol(data: Any) -> bool:
    """Validate a protocol file body; raises ProtocolError when invalid."""
    message = _first_error(jsonschema.Draft202012Validator(PROTOCOL_SCHEMA), data)
    if message:
        raise ProtocolError(f"Invalid protocol file: {message}")
    return True


def validate_run_config(data: Any) -> bool:
    """Validate a --config file body; raises SchemaError when invalid."""
    message = _first_error(jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA), data)
    if message:
        raise SchemaError(f"Invalid run config: {message}",
                          hint="See RUN_CONFIG_SCHEMA in app/schemas/report_v1.py")
    return True
