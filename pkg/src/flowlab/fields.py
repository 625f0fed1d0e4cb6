"""Conditioned velocity fields v(x, t; condition) with evaluation counting.

Three tiers of stand-ins for a pretrained model: constant fields (vanilla
inversion is exact), affine fields (closed-form flows, implicit steps are
linear solves) and a fixed-seed tanh network (opaque and nonlinear).
``deterministic_target_field`` is the model-free velocity toward a target.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from flowlab.core import Condition, TimeGrid, as_array, uniform_grid
from flowlab.errors import (
    ConditionDimensionError,
    ConfigError,
    InvalidDimensionError,
    SingularTimeError,
)

# Fields are never evaluated closer to t = 1 than this.
MAX_EVAL_TIME = 1.0 - 1e-9


class VelocityField:
    """Base class. Subclasses implement ``_velocity``.

    ``eval_count`` counts every successful ``evaluate`` call and is updated
    under a lock, so totals are exact when a field is shared between threads.
    ``counts_as_model`` is False for fields that need no model call; pipelines
    exclude those from NFE totals.
    """

    counts_as_model = True
    kind = "abstract"

    def __init__(self, dim: int, condition_dim: Optional[int] = None):
        if dim < 1:
            raise InvalidDimensionError(f"field dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.condition_dim = self.dim if condition_dim is None else int(condition_dim)
        self._eval_count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def _check_time(self, t: float) -> None:
        if not (0.0 <= t <= MAX_EVAL_TIME):
            raise SingularTimeError(f"velocity requested at t={t!r}; allowed range is [0, 1-1e-9]")

    def evaluate(self, x, t: float, condition: Optional[Condition] = None) -> np.ndarray:
        x = as_array(x)
        if x.size != self.dim:
            raise InvalidDimensionError(f"state has length {x.size}, field expects {self.dim}")
        t = float(t)
        self._check_time(t)
        condition = condition if condition is not None else Condition.none()
        c = condition.payload_or_zeros(self.condition_dim)
        out = self._velocity(x, t, c)
        with self._lock:
            self._eval_count += 1
        return out

    __call__ = evaluate

    def _velocity(self, x: np.ndarray, t: float, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "condition_dim": self.condition_dim}


class ConstantField(VelocityField):
    kind = "constant"

    def __init__(self, c, condition_dim: Optional[int] = None):
        c = as_array(c)
        if not np.all(np.isfinite(c)):
            raise ConfigError("constant field value must be finite")
        super().__init__(c.size, condition_dim)
        self.c = c.copy()
        self.c.setflags(write=False)

    def _velocity(self, x, t, c):
        return self.c.copy()

    def to_dict(self):
        return {**super().to_dict(), "value": self.c.tolist()}


def constant_field(c, condition_dim: Optional[int] = None) -> ConstantField:
    return ConstantField(c, condition_dim)


class DeterministicTargetField(VelocityField):
    """v*(x, t) = (target - x) / (1 - t). Needs no model call."""

    counts_as_model = False
    kind = "deterministic-target"
    singular_tol = 1e-12

    def __init__(self, target):
        target = as_array(target)
        if not np.all(np.isfinite(target)):
            raise ConfigError("target must be finite")
        super().__init__(target.size)
        self.target = target.copy()
        self.target.setflags(write=False)

    def _check_time(self, t):
        if t < 0.0 or t >= 1.0 - self.singular_tol:
            raise SingularTimeError(f"deterministic velocity is singular at t={t!r}")

    def _velocity(self, x, t, c):
        return (self.target - x) / (1.0 - t)

    def to_dict(self):
        return {**super().to_dict(), "target": self.target.tolist()}


def deterministic_target_field(target) -> DeterministicTargetField:
    return DeterministicTargetField(target)


@dataclass(frozen=True, eq=False)
class AffineFieldSpec:
    """v(x, t; c) = a(t) x + B c + b0, with a(t) piecewise linear over ``a_grid``."""

    a_grid: TimeGrid
    a_values: np.ndarray
    b_weights: np.ndarray
    b0: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_values, dtype=np.float64).reshape(-1)
        if a.size != len(self.a_grid):
            raise ConfigError(f"a(t) needs {len(self.a_grid)} node values, got {a.size}")
        b0 = np.array(self.b0, dtype=np.float64).reshape(-1)
        B = np.array(self.b_weights, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != b0.size:
            raise ConfigError(f"B must have shape (d, condition_dim) with d={b0.size}, got {B.shape}")
        if b0.size == 0:
            raise InvalidDimensionError("affine field needs d >= 1")
        for name, arr in (("a", a), ("B", B), ("b0", b0)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"affine coefficient table {name} is not finite")
            arr.setflags(write=False)
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "b_weights", B)
        object.__setattr__(self, "b0", b0)

    @classmethod
    def simple(cls, d: int, a: float = 1.0, b0=0.0, b_scale: float = 0.0, condition_dim=None):
        """Constant a, ``b_scale`` times an identity-like B, scalar or vector b0."""
        cdim = d if condition_dim is None else condition_dim
        return cls(
            uniform_grid(1),
            np.array([a, a], dtype=np.float64),
            b_scale * np.eye(d, cdim),
            np.broadcast_to(np.asarray(b0, dtype=np.float64), (d,)),
        )

    @property
    def dim(self) -> int:
        return self.b0.size

    @property
    def condition_dim(self) -> int:
        return self.b_weights.shape[1]

    @property
    def condition_sensitive(self) -> bool:
        return bool(np.any(self.b_weights != 0.0))

    def a_at(self, t: float) -> float:
        return float(np.interp(t, self.a_grid.times, self.a_values))

    def offset(self, condition: Optional[Condition]) -> np.ndarray:
        condition = condition if condition is not None else Condition.none()
        c = condition.payload_or_zeros(self.condition_dim)
        return self.b_weights @ c + self.b0

    def to_dict(self) -> dict:
        return {
            "a_times": self.a_grid.times.tolist(),
            "a_values": self.a_values.tolist(),
            "b_weights": self.b_weights.tolist(),
            "b0": self.b0.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AffineFieldSpec":
        return cls(TimeGrid(doc["a_times"]), doc["a_values"], doc["b_weights"], doc["b0"])


class AffineField(VelocityField):
    kind = "affine"

    def __init__(self, spec: AffineFieldSpec):
        super().__init__(spec.dim, spec.condition_dim)
        self.spec = spec

    def _velocity(self, x, t, c):
        s = self.spec
        return s.a_at(t) * x + s.b_weights @ c + s.b0

    def to_dict(self):
        return {**super().to_dict(), "spec": self.spec.to_dict()}


def affine_field(spec: AffineFieldSpec) -> AffineField:
    return AffineField(spec)


@dataclass(frozen=True)
class SmoothRandomFieldSpec:
    """Parameters of the fixed-seed tanh network. Weights are regenerated from ``seed``."""

    seed: int
    dim: int
    hidden_width: int = 32
    gain: float = 1.0
    condition_dim: Optional[int] = None

    def __post_init__(self):
        if self.dim < 1 or self.hidden_width < 1:
            raise InvalidDimensionError("dim and hidden_width must be positive")
        if self.condition_dim is None:
            object.__setattr__(self, "condition_dim", self.dim)
        if not np.isfinite(self.gain):
            raise ConfigError("gain must be finite")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dim": self.dim,
            "hidden_width": self.hidden_width,
            "gain": self.gain,
            "condition_dim": self.condition_dim,
        }


class SmoothRandomField(VelocityField):
    """v = g * (W2 tanh(W1 [x, t, c] + b1) + b2) with weights drawn once from the seed."""

    kind = "smooth-random"

    def __init__(self, spec: SmoothRandomFieldSpec):
        super().__init__(spec.dim, spec.condition_dim)
        self.spec = spec
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        n_in = spec.dim + 1 + spec.condition_dim
        h = spec.hidden_width
        self.w1 = rng.standard_normal((h, n_in)) / np.sqrt(n_in)
        self.b1 = 0.5 * rng.standard_normal(h)
        self.w2 = rng.standard_normal((spec.dim, h)) / np.sqrt(h)
        self.b2 = 0.1 * rng.standard_normal(spec.dim)
        for w in (self.w1, self.b1, self.w2, self.b2):
            w.setflags(write=False)

    def _pre(self, x, t, c):
        z = np.concatenate([x, [t], c])
        return self.w1 @ z + self.b1

    def _velocity(self, x, t, c):
        return self.spec.gain * (self.w2 @ np.tanh(self._pre(x, t, c)) + self.b2)

    def jacobian_x(self, x, t: float, condition: Optional[Condition] = None) -> np.ndarray:
        """Analytic d v / d x (not counted as an evaluation)."""
        condition = condition if condition is not None else Condition.none()
        c = condition.payload_or_zeros(self.condition_dim)
        s = 1.0 - np.tanh(self._pre(as_array(x), float(t), c)) ** 2
        return self.spec.gain * (self.w2 * s) @ self.w1[:, : self.dim]

    def to_dict(self):
        return {**super().to_dict(), "spec": self.spec.to_dict()}


def smooth_random_field(spec: SmoothRandomFieldSpec) -> SmoothRandomField:
    return SmoothRandomField(spec)


def check_condition(field: VelocityField, values) -> np.ndarray:
    arr = as_array(values)
    if arr.size != field.condition_dim:
        raise ConditionDimensionError(
            f"condition has length {arr.size}, field expects {field.condition_dim}"
        )
    return arr
