"""Experiment configuration documents.

A run is described by one flat TOML document with nested tables, for example::

    seed = 7
    steps = 18
    t_tau = 0.2
    eta = 1.0
    method = "reinversion"

    [field]
    name = "smooth-random"
    dim = 256
    seed = 3

    [source]
    kind = "blob"
    rows = 16
    cols = 16
    center = [5, 5]
    radius = 2.5
    amplitude = 1.0

Command-line flags override document keys. ``resolve`` fills every default so
the resolved dictionary, stored in the run metadata, replays the run without
consulting defaults again. A metadata JSON can be passed wherever a TOML
document is accepted.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from flowlab.core import (
    Condition,
    GridShape,
    LatentState,
    Mask,
    PriorSampler,
    TimeGrid,
    sample_prior,
    uniform_grid,
)
from flowlab.data import make_blob_grid, make_box_mask, make_reconstructable_source
from flowlab.errors import ConfigError
from flowlab.fields import (
    AffineFieldSpec,
    SmoothRandomFieldSpec,
    VelocityField,
    affine_field,
    constant_field,
    smooth_random_field,
)
from flowlab.io import read_mask, read_state
from flowlab.solver import euler_sample

FIELD_NAMES = ("zero", "constant", "identity", "affine", "smooth-random")
STATE_KINDS = ("values", "blob", "file", "prior", "forward", "reconstructable")
MASK_KINDS = ("box", "file", "ones", "zeros")


def load_document(path) -> Dict[str, Any]:
    """Read a TOML config or the ``config`` section of a run's metadata JSON."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json" or raw.lstrip().startswith(b"{"):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if doc.get("tool") == "flowlab" and "config" in doc:
            return copy.deepcopy(doc["config"])
        return doc
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: invalid config document: {exc}") from exc
    return _absolute_paths(doc, path.resolve().parent)


def _absolute_paths(doc, base: Path):
    for key in ("source", "reference", "start", "mask"):
        spec = doc.get(key)
        if isinstance(spec, dict) and "path" in spec:
            spec["path"] = str((base / spec["path"]).resolve())
        elif key == "mask" and isinstance(spec, str):
            doc[key] = str((base / spec).resolve())
    return doc


def require(doc: dict, key: str, where: str = ""):
    if key not in doc:
        name = f"{where}.{key}" if where else key
        raise ConfigError(f"missing required key '{name}'")
    return doc[key]


def _int(value, name) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"'{name}' must be an integer, got {value!r}")
    return int(value)


def _float(value, name) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{name}' must be a number, got {value!r}") from exc


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- resolution

def _state_spec(spec) -> dict:
    if isinstance(spec, list):
        return {"kind": "values", "values": spec}
    if isinstance(spec, str):
        return {"kind": "file", "path": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"state spec must be a table, list or path, got {spec!r}")
    spec = dict(spec)
    kind = spec.setdefault("kind", "values")
    if kind not in STATE_KINDS:
        raise ConfigError(f"unknown state kind {kind!r}; expected one of {', '.join(STATE_KINDS)}")
    return spec


def _mask_spec(spec) -> dict:
    if isinstance(spec, str):
        return {"kind": "file", "path": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"mask spec must be a table or a path, got {spec!r}")
    spec = dict(spec)
    kind = require(spec, "kind", "mask")
    if kind not in MASK_KINDS:
        raise ConfigError(f"unknown mask kind {kind!r}; expected one of {', '.join(MASK_KINDS)}")
    return spec


def _pin_file(spec: dict, role: str) -> dict:
    """Record the sha256 of an input file, or check it against a recorded one."""
    if spec.get("kind") != "file":
        return spec
    path = require(spec, "path", role)
    try:
        digest = file_digest(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {role} file {path}: {exc}") from exc
    if spec.setdefault("sha256", digest) != digest:
        raise ConfigError(f"{role} file {path} changed since the run was recorded")
    return spec


def _spec_dim(spec: Optional[dict]) -> Optional[int]:
    if not spec:
        return None
    kind = spec.get("kind")
    if kind == "values" and "values" in spec:
        return len(spec["values"])
    if kind == "blob" and "rows" in spec and "cols" in spec:
        return int(spec["rows"]) * int(spec["cols"])
    if kind == "file" and "path" in spec:
        try:
            return read_state(spec["path"]).d
        except (OSError, ConfigError):
            return None
    return None


def _resolve_field(spec: dict, dim_hint: Optional[int]) -> dict:
    spec = dict(spec)
    name = require(spec, "name", "field")
    if name not in FIELD_NAMES:
        raise ConfigError(f"unknown field {name!r}; expected one of {', '.join(FIELD_NAMES)}")
    if name == "constant":
        require(spec, "value", "field")
        spec["dim"] = len(spec["value"])
        return spec
    if "dim" not in spec:
        if name in ("identity", "affine") and dim_hint is None:
            spec["dim"] = 1
        elif dim_hint is None:
            require(spec, "dim", "field")
        else:
            spec["dim"] = dim_hint
    spec["dim"] = _int(spec["dim"], "field.dim")
    if name == "affine":
        spec.setdefault("a", 1.0)
        spec.setdefault("b0", 0.0)
        if "b_weights" not in spec:
            spec.setdefault("b_scale", 0.0)
    elif name == "smooth-random":
        spec.setdefault("seed", 0)
        spec.setdefault("hidden_width", 32)
        spec.setdefault("gain", 1.0)
    return spec


def resolve(doc: Dict[str, Any], command: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Merge flag overrides into ``doc`` and fill defaults for ``command``."""
    doc = copy.deepcopy(doc)
    doc.pop("out", None)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "field":
            field_doc = doc.get("field") if isinstance(doc.get("field"), dict) else {}
            if field_doc.get("name") != value:
                field_doc = {k: v for k, v in field_doc.items() if k in ("dim",)}
            field_doc["name"] = value
            doc["field"] = field_doc
        elif key == "mask":
            doc["mask"] = {"kind": "file", "path": str(Path(value).resolve())}
        elif key == "steps":
            doc.pop("times", None)
            doc["steps"] = value
        else:
            doc[key] = value
    doc["command"] = command
    doc["seed"] = _int(doc.get("seed", 0), "seed")
    if not (0 <= doc["seed"] < 2**64):
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if "times" in doc:
        doc["times"] = [_float(t, "times") for t in doc["times"]]
        doc["steps"] = len(doc["times"]) - 1
    else:
        doc["steps"] = _int(doc.get("steps", 18), "steps")

    for key in ("source", "reference", "start"):
        if key in doc:
            doc[key] = _pin_file(_state_spec(doc[key]), key)
    if doc.get("mask") is not None:
        doc["mask"] = _pin_file(_mask_spec(doc["mask"]), "mask")

    if command in ("sample", "invert", "edit") or (command == "bench" and "field" in doc):
        hint = next(
            (d for d in (_spec_dim(doc.get(k)) for k in ("start", "source", "reference")) if d is not None),
            None,
        )
        doc["field"] = _resolve_field(require(doc, "field"), hint)

    if command == "sample":
        doc.setdefault("start", {"kind": "prior"})
        doc.setdefault("condition", "none")
        if doc["condition"] not in ("none", "source", "reference"):
            raise ConfigError(f"condition must be none, source or reference, got {doc['condition']!r}")
        if doc["condition"] != "none":
            require(doc, doc["condition"])
    elif command == "invert":
        method = require(doc, "method")
        if method not in ("vanilla", "ideal-affine", "recon"):
            raise ConfigError(f"invert method must be vanilla, ideal-affine or recon, got {method!r}")
        require(doc, "source")
        doc.setdefault("condition", "source")
        if doc["condition"] not in ("none", "source"):
            raise ConfigError("invert condition must be none or source")
    elif command == "edit":
        doc.setdefault("method", "reinversion")
        if doc["method"] not in ("reinversion", "recon-inv"):
            raise ConfigError(f"edit method must be reinversion or recon-inv, got {doc['method']!r}")
        require(doc, "source")
        require(doc, "reference")
        doc["t_tau"] = _float(doc.get("t_tau", 0.2), "t_tau")
        doc["eta"] = _float(doc.get("eta", 1.0), "eta")
        doc["deterministic_stage1"] = bool(doc.get("deterministic_stage1", False))
    elif command == "bench":
        doc.setdefault("steps_list", [8, 18, 28])
        doc["t_tau"] = _float(doc.get("t_tau", 0.2), "t_tau")
        doc.setdefault("t_tau_sweep", [0.05, 0.1, 0.2, 0.3, 0.5])
        doc.setdefault("eta_sweep", [0.0, 0.25, 0.5, 0.75, 1.0])
        doc.setdefault("fixtures", "shipped")
    return doc


# ---------------------------------------------------------------- builders

def build_grid(doc: dict) -> TimeGrid:
    if "times" in doc:
        return TimeGrid(doc["times"])
    return uniform_grid(doc["steps"])


def build_field(spec: dict) -> VelocityField:
    name = spec["name"]
    dim = spec["dim"]
    if name == "zero":
        return constant_field(np.zeros(dim))
    if name == "constant":
        return constant_field([_float(v, "field.value") for v in spec["value"]])
    if name == "identity":
        return affine_field(AffineFieldSpec.simple(dim, a=1.0))
    if name == "affine":
        return affine_field(affine_spec(spec))
    if name == "smooth-random":
        return smooth_random_field(
            SmoothRandomFieldSpec(
                seed=_int(spec["seed"], "field.seed"),
                dim=dim,
                hidden_width=_int(spec["hidden_width"], "field.hidden_width"),
                gain=_float(spec["gain"], "field.gain"),
            )
        )
    raise ConfigError(f"unknown field {name!r}")


def affine_spec(spec: dict) -> AffineFieldSpec:
    dim = spec["dim"]
    a = spec["a"]
    a_values = [a, a] if np.isscalar(a) else list(a)
    if "a_times" in spec:
        a_grid = TimeGrid(spec["a_times"])
    else:
        a_grid = uniform_grid(len(a_values) - 1)
    b0 = np.broadcast_to(np.asarray(spec["b0"], dtype=np.float64), (dim,))
    if "b_weights" in spec:
        B = np.asarray(spec["b_weights"], dtype=np.float64)
    else:
        B = _float(spec["b_scale"], "field.b_scale") * np.eye(dim)
    return AffineFieldSpec(a_grid, a_values, B, b0)


@dataclass(frozen=True, eq=False)
class BuiltState:
    state: LatentState
    noise: Optional[LatentState] = None  # the noise it was generated from, when known
    condition: Optional[Condition] = None  # condition used while generating it


def build_state(spec: dict, role: str, doc: dict, field: VelocityField, grid: TimeGrid) -> BuiltState:
    """Materialise a state spec. ``role`` names the config key in diagnostics."""
    kind = spec["kind"]
    time = 0.0 if role == "start" else 1.0
    shape = GridShape(int(spec["rows"]), int(spec["cols"])) if "rows" in spec and "cols" in spec else None
    if kind == "values":
        values = require(spec, "values", role)
        return BuiltState(LatentState([_float(v, f"{role}.values") for v in values], time, shape))
    if kind == "blob":
        shape = GridShape(int(require(spec, "rows", role)), int(require(spec, "cols", role)))
        st = make_blob_grid(
            shape,
            require(spec, "center", role),
            _float(require(spec, "radius", role), f"{role}.radius"),
            _float(spec.get("amplitude", 1.0), f"{role}.amplitude"),
        )
        return BuiltState(st.at(time))
    if kind == "file":
        st = read_state(require(spec, "path", role))
        return BuiltState(st.at(time))
    seed = _int(spec.get("seed", doc["seed"]), f"{role}.seed")
    noise = sample_prior(PriorSampler(seed), field.dim, shape)
    if kind == "prior":
        return BuiltState(noise.at(time), noise)
    if kind == "forward":
        return BuiltState(euler_sample(field, noise, grid, Condition.none()).final, noise, Condition.none())
    if kind == "reconstructable":
        st = make_reconstructable_source(field, noise, grid)
        return BuiltState(st, noise, Condition.source(st.values))
    raise ConfigError(f"unknown state kind {kind!r}")


def build_mask(spec: dict, d: int, shape: Optional[GridShape]) -> Mask:
    kind = spec["kind"]
    if kind == "file":
        mask = read_mask(require(spec, "path", "mask"))
    elif kind == "ones":
        mask = Mask.ones(d, shape)
    elif kind == "zeros":
        mask = Mask.zeros(d, shape)
    else:
        if shape is None:
            raise ConfigError("a box mask needs a source with a grid shape")
        mask = make_box_mask(
            shape,
            _int(require(spec, "top", "mask"), "mask.top"),
            _int(require(spec, "left", "mask"), "mask.left"),
            _int(require(spec, "height", "mask"), "mask.height"),
            _int(require(spec, "width", "mask"), "mask.width"),
        )
    if mask.d != d:
        raise ConfigError(f"mask has length {mask.d}, state has {d}")
    return mask
