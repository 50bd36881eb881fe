"""JSON schemas for manifests, inputs and emitted files."""

from __future__ import annotations

from typing import Any, Mapping

import jsonschema

from .errors import ConfigurationError

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}

TOPOLOGY = {
    "type": "object",
    "required": ["kind", "alpha_db_per_km", "nodes", "links"],
    "properties": {
        "kind": {"enum": ["Metro", "Distribution", "LongHaul"]},
        "alpha_db_per_km": {"type": "number", "exclusiveMinimum": 0},
        "sharing": {"enum": ["symmetric", "shared"]},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "tier", "b_max_bits", "b_min_bits"],
                "properties": {
                    "id": {"type": "string"},
                    "tier": {"enum": ["Backbone", "Aggregation", "Edge"]},
                    "b_max_bits": _nonneg,
                    "b_min_bits": _nonneg,
                    "phi": _prob,
                    "delta_bits_per_s": _nonneg,
                    "classes": {"type": "array", "items": {"type": "string"}},
                    "rates": {"type": "object", "additionalProperties": _nonneg},
                },
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "from", "to", "d_km"],
                "properties": {
                    "id": {"type": "string"},
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "d_km": {"type": "number", "exclusiveMinimum": 0},
                    "l_fix_db": _nonneg,
                    "rate_curve": {"type": "string"},
                    "weights": {"type": "object", "additionalProperties": _nonneg},
                    "alpha_db_per_km": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}

CLASSES = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["id", "lambda_pps", "s_bits", "L_s", "A_target"],
        "properties": {
            "id": {"type": "string"},
            "name": {"type": "string"},
            "lambda_pps": _nonneg,
            "s_bits": _nonneg,
            "L_s": {"type": "number", "exclusiveMinimum": 0},
            "A_target": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "beta": {"type": "number", "minimum": 1},
            "f_hz": _nonneg,
            "l_sess_bits": _nonneg,
            "l_mac_bits": _nonneg,
            "uses_otp": {"type": "boolean"},
            "T_conf_years": _nonneg,
            "weight": {"type": "number", "exclusiveMinimum": 0},
            "q_per_year": _nonneg,
            "c_sla": _nonneg,
            "on_dwell_s": {"type": "number", "exclusiveMinimum": 0},
            "off_dwell_s": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}

CURVE = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["dv", "cv", "tabulated", "pqc"]},
        "r0_bps": {"type": "number", "exclusiveMinimum": 0},
        "eta_per_db": {"type": "number", "exclusiveMinimum": 0},
        "cutoff_db": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "array", "items": {"type": "array", "items": _num,
                                              "minItems": 2, "maxItems": 2}},
        "hs_per_s": _nonneg,
        "bits_per_hs": {"type": "number", "exclusiveMinimum": 0},
    },
}

CURVES = {"type": "object", "additionalProperties": CURVE}

SCRIPT = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["kind", "link", "start_s", "duration_s"],
        "properties": {
            "kind": {"enum": ["KeyRateOutage", "LossStep", "LinkCut"]},
            "link": {"type": "string"},
            "start_s": _nonneg,
            "duration_s": {"type": "number", "exclusiveMinimum": 0},
            "magnitude_db": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}

SCENARIOS = {
    "type": "object",
    "required": ["scenarios"],
    "properties": {
        "scenarios": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "prob"],
                "properties": {
                    "name": {"type": "string"},
                    "prob": _prob,
                    "overrides": {"type": "object"},
                },
            },
        },
    },
}

MANIFEST = {
    "type": "object",
    "required": ["topology"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "topology": {"type": "string"},
        "classes": {"type": "string"},
        "curves": {"type": "string"},
        "pqc": {"type": "string"},
        "script": {"type": "string"},
        "delay_model": {"type": "string"},
        "prices": {"type": "string"},
        "scenarios": {"type": "string"},
        "architectures": {
            "type": "array",
            "minItems": 1,
            "items": {"enum": ["PqcOnly", "QkdOnly", "Hybrid"]},
        },
        "baseline": {"enum": ["PqcOnly", "QkdOnly", "Hybrid"]},
        "shadow_price": _nonneg,
        "chance_eps": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "sim": {"type": "object"},
        "sizing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"qkd_margin": {"type": "number", "exclusiveMinimum": 0},
                           "pqc_margin": {"type": "number", "exclusiveMinimum": 0},
                           "bits_per_hs": {"type": "number", "exclusiveMinimum": 0}},
        },
        "disturbances": {"type": "object"},
        "sweep": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "values"],
                "properties": {"path": {"type": "string"}, "values": {"type": "array"}},
            },
        },
        "output": {"type": "string"},
    },
}

SLA_REPORT = {
    "type": "object",
    "required": ["class", "node"],
    "properties": {
        "class": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {"availability": _prob, "delay_exceedance": _prob,
                               "ci95": {"type": ["array", "null"]}},
            },
        },
        "node": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {"p_out": _prob, "fb_occupancy": _prob,
                               "ci95": {"type": ["array", "null"]}},
            },
        },
    },
}

RUN_LOG = {
    "type": "object",
    "required": ["version", "timestamp", "seeds", "config_digest"],
    "properties": {
        "version": {"type": "string"},
        "timestamp": {"type": "string"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "config_digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    },
}


def validate(doc: Any, schema: Mapping, what: str) -> None:
    """Raise ConfigurationError naming ``what`` when ``doc`` violates ``schema``."""
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{what}: {exc.message} at {where}") from None
