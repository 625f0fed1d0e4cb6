"""Shared value types, time grids and the seeded prior.

All arrays held by these types are float64 and made read-only on construction,
so instances can be shared between threads without copying.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from flowlab.errors import (
    ConditionDimensionError,
    ConfigError,
    InvalidDimensionError,
    InvalidGridError,
    TimeMismatchError,
)

TIME_TOL = 1e-12
GENERATOR_NAME = "numpy.random.Generator(PCG64).standard_normal"


def _frozen(values, name="values") -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise InvalidDimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int

    def __post_init__(self):
        if int(self.rows) < 1 or int(self.cols) < 1:
            raise InvalidDimensionError(f"grid shape must be positive, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class LatentState:
    """A point on a flow trajectory: flat float64 values plus their time."""

    values: np.ndarray
    time: float
    shape: Optional[GridShape] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        t = float(self.time)
        if not (0.0 <= t <= 1.0):
            raise ConfigError(f"state time {t} outside [0, 1]")
        object.__setattr__(self, "time", t)
        if self.shape is not None and self.shape.size != self.values.size:
            raise InvalidDimensionError(
                f"shape {self.shape.rows}x{self.shape.cols} does not match d={self.values.size}"
            )

    @property
    def d(self) -> int:
        return self.values.size

    def at(self, time: float) -> "LatentState":
        return LatentState(self.values, time, self.shape)

    def as_grid(self) -> np.ndarray:
        if self.shape is None:
            raise InvalidDimensionError("state has no grid shape")
        return self.values.reshape(self.shape.rows, self.shape.cols)

    def __eq__(self, other):
        if not isinstance(other, LatentState):
            return NotImplemented
        return (
            self.time == other.time
            and self.shape == other.shape
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-coordinate blend weights in [0, 1]; 1 marks the region to edit."""

    values: np.ndarray
    shape: Optional[GridShape] = None

    def __post_init__(self):
        arr = _frozen(self.values, "mask")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ConfigError("mask entries must lie in [0, 1]")
        object.__setattr__(self, "values", arr)
        if self.shape is not None and self.shape.size != arr.size:
            raise InvalidDimensionError("mask shape does not match its length")

    @property
    def d(self) -> int:
        return self.values.size

    @classmethod
    def ones(cls, d: int, shape: Optional[GridShape] = None) -> "Mask":
        return cls(np.ones(d), shape)

    @classmethod
    def zeros(cls, d: int, shape: Optional[GridShape] = None) -> "Mask":
        return cls(np.zeros(d), shape)


class ConditionTag(str, enum.Enum):
    NONE = "none"
    SOURCE = "source"
    REFERENCE = "reference"


@dataclass(frozen=True, eq=False)
class Condition:
    tag: ConditionTag = ConditionTag.NONE
    payload: Optional[np.ndarray] = None

    def __post_init__(self):
        tag = ConditionTag(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag is ConditionTag.NONE:
            if self.payload is not None:
                raise ConfigError("an unconditioned Condition cannot carry a payload")
        else:
            if self.payload is None:
                raise ConfigError(f"{tag.value} condition requires a payload")
            object.__setattr__(self, "payload", _frozen(self.payload, "condition payload"))

    @classmethod
    def none(cls) -> "Condition":
        return cls()

    @classmethod
    def source(cls, values) -> "Condition":
        return cls(ConditionTag.SOURCE, _as_values(values))

    @classmethod
    def reference(cls, values) -> "Condition":
        return cls(ConditionTag.REFERENCE, _as_values(values))

    def payload_or_zeros(self, dim: int) -> np.ndarray:
        if self.payload is None:
            return np.zeros(dim)
        if self.payload.size != dim:
            raise ConditionDimensionError(
                f"condition payload has length {self.payload.size}, field expects {dim}"
            )
        return self.payload


def _as_values(values) -> np.ndarray:
    if isinstance(values, LatentState):
        return values.values
    return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes from exactly 0 to exactly 1."""

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        if t.size < 2:
            raise InvalidGridError("a time grid needs at least one step")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise InvalidGridError("grid endpoints must be exactly 0 and 1")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0.0):
            raise InvalidGridError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.times)

    def delta(self, i: int) -> float:
        return float(self.times[i + 1] - self.times[i])

    def __getitem__(self, i: int) -> float:
        return float(self.times[i])

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"n": self.n, "times": [float(x) for x in self.times]}


def uniform_grid(n: int) -> TimeGrid:
    """Grid with t_i = i / n."""
    if int(n) != n or n < 1:
        raise InvalidGridError(f"step count must be a positive integer, got {n!r}")
    n = int(n)
    times = np.arange(n + 1, dtype=np.float64) / n
    return TimeGrid(times)


def check_time(state: LatentState, expected: float, what: str = "state") -> None:
    if abs(state.time - expected) > TIME_TOL:
        raise TimeMismatchError(f"{what} has time {state.time!r}, expected {expected!r}")


class PriorSampler:
    """Seeded stream of i.i.d. standard normal draws.

    Stateful: successive calls continue the same stream, so one sampler must
    not be shared between concurrent tasks.
    """

    generator_name = GENERATOR_NAME

    def __init__(self, seed: int):
        seed = int(seed)
        if not (0 <= seed < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._rng = np.random.Generator(np.random.PCG64(seed))

    @property
    def identity(self) -> dict:
        return {"generator": self.generator_name, "numpy": np.__version__, "seed": self.seed}

    def normal(self, d: int) -> np.ndarray:
        return self._rng.standard_normal(d)


def sample_prior(sampler: PriorSampler, d: int, shape: Optional[GridShape] = None) -> LatentState:
    if int(d) != d or d < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {d!r}")
    return LatentState(sampler.normal(int(d)), 0.0, shape)


def as_array(values: "LatentState | Sequence[float] | np.ndarray") -> np.ndarray:
    return np.asarray(_as_values(values), dtype=np.float64).reshape(-1)
