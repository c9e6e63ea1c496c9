"""Network plan files: JSON descriptions of per-row layer shapes.

A plan file lists rows; each row holds one or more layers with their
channel counts and the factor reshapes used by the ring/train families.
The bundled files describe ResNet-32 and WRN-28-10 on CIFAR-10.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .accounting import PlanRow, network_report
from .plan import LayerPlan, PlanError

_DIMS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_RESHAPE = {"type": "array", "items": _DIMS, "minItems": 2, "maxItems": 2}

PLAN_SCHEMA = {
    "type": "object",
    "required": ["name", "rows"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "uncompressed_params": {"type": "integer", "minimum": 1},
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "layers"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "repeat": {"type": "integer", "minimum": 1},
                    "reference": {
                        "type": "object",
                        "additionalProperties": {"type": "number"},
                    },
                    "layers": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["kind", "channels", "reshape"],
                            "additionalProperties": False,
                            "properties": {
                                "kind": {"enum": ["conv", "fc"]},
                                "kernel": {"type": "integer", "minimum": 1},
                                "channels": {
                                    "type": "array",
                                    "items": {"type": "integer", "minimum": 1},
                                    "minItems": 2,
                                    "maxItems": 2,
                                },
                                "spatial": {"type": "integer", "minimum": 1},
                                "stride": {"type": "integer", "minimum": 1},
                                "padding": {"type": "integer", "minimum": 0},
                                "reshape": {
                                    "type": "object",
                                    "required": ["tr", "str"],
                                    "additionalProperties": False,
                                    "properties": {"tr": _RESHAPE, "str": _RESHAPE},
                                },
                            },
                        },
                    },
                },
            },
        },
    },
}

BUNDLED = ("resnet32", "wrn28")


def load_plan_file(source):
    """Read and validate a plan file; ``source`` is a path or a bundled name."""
    name = str(source)
    if name in BUNDLED:
        text = resources.files("stptensor.data").joinpath(f"{name}.json").read_text()
    else:
        path = Path(source)
        if not path.exists():
            stem = path.stem
            if stem in BUNDLED:
                text = resources.files("stptensor.data").joinpath(f"{stem}.json").read_text()
            else:
                raise PlanError(f"plan file not found: {source}")
        else:
            text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise PlanError(f"plan file is not valid JSON: {e}") from None
    try:
        jsonschema.validate(data, PLAN_SCHEMA)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise PlanError(f"plan file invalid at {loc}: {e.message}") from None
    for row in data["rows"]:
        for layer in row["layers"]:
            cin, cout = layer["channels"]
            for key, (ri, ro) in layer["reshape"].items():
                if _prod(ri) != cin or _prod(ro) != cout:
                    raise PlanError(
                        f"row {row['name']!r}: {key} reshape {ri}x{ro} does not match channels {cin}->{cout}"
                    )
    return data


def _prod(xs):
    out = 1
    for x in xs:
        out *= x
    return out


def _pad_ones(a, b):
    n = max(len(a), len(b))
    return list(a) + [1] * (n - len(a)), list(b) + [1] * (n - len(b))


def layer_plan(layer, fmt, t=1, rank=None):
    """Turn one plan-file layer entry into a :class:`LayerPlan`.

    Ring and train families use the ``str`` reshape when ``t > 1`` and the
    ``tr`` reshape otherwise, so an STP format at ``t = 1`` coincides with
    its classical counterpart.  Tucker families act on the raw channels.
    """
    fmt = fmt.lower()
    probe = LayerPlan(fmt, (1,), (1,), t=t)
    t = probe.t
    kind = layer["kind"]
    conv = {}
    if kind == "conv":
        spatial = layer.get("spatial")
        conv = dict(
            kernel=layer.get("kernel", 3),
            height=spatial,
            width=spatial,
            stride=layer.get("stride", 1),
            padding=layer.get("padding", 0),
        )
    if probe.family == "tucker":
        cin, cout = layer["channels"]
        return LayerPlan(fmt, (cin,), (cout,), rank=rank, t=t, kind=kind, **conv)
    ri, ro = layer["reshape"]["str" if t > 1 else "tr"]
    if probe.family == "tt" and kind == "conv":
        ri, ro = _pad_ones(ri, ro)
    return LayerPlan(fmt, tuple(ri), tuple(ro), rank=rank, t=t, kind=kind, **conv)


def plan_rows(data, fmt, t=1):
    """Rank-free :class:`PlanRow` objects for every row of a plan file."""
    probe = LayerPlan(fmt, (1,), (1,), t=t)
    key = "str" if probe.family == "tr" and probe.t > 1 else ("tr" if probe.family == "tr" else None)
    rows = []
    for row in data["rows"]:
        ref = row.get("reference", {}).get(key) if key else None
        layers = tuple(layer_plan(L, fmt, t) for L in row["layers"])
        rows.append(PlanRow(row["name"], layers, row.get("repeat", 1), ref))
    return rows


def report_for(source, fmt="str", t=2, rank=None, batch=None):
    """Parameter report of a plan file in one format."""
    data = load_plan_file(source)
    return network_report(
        plan_rows(data, fmt, t),
        uncompressed=data.get("uncompressed_params"),
        name=data["name"],
        rank=rank,
        batch=batch,
    )
