"""Forward Euler integration with velocity caching, plus verification oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from flowlab.core import Condition, LatentState, TimeGrid, check_time
from flowlab.errors import ConfigError, DivergenceError, InvalidDimensionError
from flowlab.fields import AffineField, AffineFieldSpec, VelocityField

ORACLE_BASE_STEPS = 1024
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States at grid nodes ``start_index .. start_index + len(velocities)``.

    ``velocities[k]`` is the velocity applied on the step leaving node
    ``start_index + k``. ``condition`` is None when stages used different
    conditions.
    """

    states: List[LatentState]
    velocities: np.ndarray
    grid: TimeGrid
    condition: Optional[Condition] = None
    start_index: int = 0

    @property
    def steps(self) -> int:
        return len(self.velocities)

    @property
    def end_index(self) -> int:
        return self.start_index + self.steps

    @property
    def final(self) -> LatentState:
        return self.states[-1]

    @property
    def initial(self) -> LatentState:
        return self.states[0]

    def state_at(self, index: int) -> LatentState:
        if not (self.start_index <= index <= self.end_index):
            raise IndexError(f"node {index} outside trajectory [{self.start_index}, {self.end_index}]")
        return self.states[index - self.start_index]

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    def replay(self) -> np.ndarray:
        """Recompute the states from the first one and the cached velocities."""
        x = self.states[0].values.copy()
        out = [x.copy()]
        for k, v in enumerate(self.velocities):
            i = self.start_index + k
            x = x + self.grid.delta(i) * v
            out.append(x.copy())
        return np.stack(out)

    def then(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a trajectory that starts where this one ends."""
        if other.start_index != self.end_index or other.grid != self.grid:
            raise ConfigError("trajectories are not contiguous on one grid")
        if not np.array_equal(other.initial.values, self.final.values):
            raise ConfigError("trajectories do not share the joining state")
        cond = self.condition if _same_condition(self.condition, other.condition) else None
        return Trajectory(
            self.states + other.states[1:],
            np.concatenate([self.velocities, other.velocities]),
            self.grid,
            cond,
            self.start_index,
        )


def _same_condition(a: Optional[Condition], b: Optional[Condition]) -> bool:
    if a is None or b is None:
        return False
    if a.tag != b.tag:
        return False
    if a.payload is None:
        return b.payload is None
    return b.payload is not None and np.array_equal(a.payload, b.payload)


VelocityFn = Callable[[np.ndarray, float], np.ndarray]


def integrate(
    velocity: VelocityFn,
    start: LatentState,
    grid: TimeGrid,
    from_index: int,
    to_index: int,
    condition: Optional[Condition] = None,
) -> Trajectory:
    """Euler-integrate an arbitrary ``velocity(x, t)`` over grid steps [from_index, to_index)."""
    n = grid.n
    if not (0 <= from_index < to_index <= n):
        raise ConfigError(f"invalid step range [{from_index}, {to_index}) for n={n}")
    check_time(start, grid[from_index], "start state")
    x = start.values
    states = [start]
    velocities = []
    for i in range(from_index, to_index):
        v = np.asarray(velocity(x, grid[i]), dtype=np.float64)
        if v.shape != x.shape:
            raise InvalidDimensionError(f"velocity has shape {v.shape}, state {x.shape}")
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"non-finite velocity at step {i} (t={grid[i]!r})", step=i)
        x = x + grid.delta(i) * v
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state after step {i}", step=i)
        velocities.append(v)
        # the last node is pinned to exactly t_n so stage boundaries compare exactly
        states.append(LatentState(x, grid[i + 1], start.shape))
    return Trajectory(states, np.stack(velocities), grid, condition, from_index)


def _check_dims(field: VelocityField, start: LatentState) -> None:
    if start.d != field.dim:
        raise InvalidDimensionError(f"start state has d={start.d}, field expects {field.dim}")


def euler_sample_partial(
    field: VelocityField,
    start: LatentState,
    grid: TimeGrid,
    condition: Optional[Condition],
    from_index: int,
    to_index: int,
) -> Trajectory:
    _check_dims(field, start)
    condition = condition if condition is not None else Condition.none()
    return integrate(
        lambda x, t: field.evaluate(x, t, condition), start, grid, from_index, to_index, condition
    )


def euler_sample(
    field: VelocityField,
    start: LatentState,
    grid: TimeGrid,
    condition: Optional[Condition] = None,
) -> Trajectory:
    """Full forward pass x_{i+1} = x_i + (t_{i+1} - t_i) v(x_i, t_i); exactly n evaluations."""
    return euler_sample_partial(field, start, grid, condition, 0, grid.n)


def closed_form_affine_solve(
    spec: AffineFieldSpec,
    start: LatentState,
    condition: Optional[Condition],
    t_from: float,
    t_to: float,
) -> LatentState:
    """Exact flow of dx/dt = a(t) x + k for piecewise-linear a and constant k = B c + b0.

    The exponent is integrated in closed form on each linear piece. The forcing
    integral is closed form where a is constant on the piece and 40-point
    Gauss-Legendre otherwise (its integrand is entire, so that is exact to
    rounding).
    """
    if not (0.0 <= t_from <= t_to <= 1.0):
        raise ConfigError(f"invalid time range [{t_from}, {t_to}]")
    if start.d != spec.dim:
        raise InvalidDimensionError(f"start state has d={start.d}, spec expects {spec.dim}")
    k = spec.offset(condition)
    x = start.values.copy()
    inner = spec.a_grid.times[(spec.a_grid.times > t_from) & (spec.a_grid.times < t_to)]
    cuts = np.concatenate([[t_from], inner, [t_to]])
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        h = s1 - s0
        if h == 0.0:
            continue
        alpha = spec.a_at(s0)
        beta = (spec.a_at(s1) - alpha) / h
        growth_total = alpha * h + 0.5 * beta * h * h
        if beta == 0.0:
            forcing = h if alpha == 0.0 else np.expm1(alpha * h) / alpha
        else:
            u = 0.5 * h * (_GL_NODES + 1.0)
            growth_u = alpha * u + 0.5 * beta * u * u
            forcing = 0.5 * h * float(np.sum(_GL_WEIGHTS * np.exp(growth_total - growth_u)))
        x = np.exp(growth_total) * x + forcing * k
    return LatentState(x, t_to, start.shape)


def oracle_solve(
    field: VelocityField,
    start: LatentState,
    condition: Optional[Condition] = None,
    refinement: int = 1,
    closed_form: bool = True,
) -> LatentState:
    """Reference solution at t = 1 from ``start.time``.

    Affine fields use the closed form unless ``closed_form`` is False; every
    other field gets ``refinement * 1024`` uniform Euler steps. The refined
    path calls ``field.evaluate`` and therefore advances its counter.
    """
    if int(refinement) != refinement or refinement < 1:
        raise ConfigError(f"refinement must be a positive integer, got {refinement!r}")
    _check_dims(field, start)
    if closed_form and isinstance(field, AffineField):
        return closed_form_affine_solve(field.spec, start, condition, start.time, 1.0)
    condition = condition if condition is not None else Condition.none()
    steps = int(refinement) * ORACLE_BASE_STEPS
    t0 = start.time
    times = t0 + (1.0 - t0) * np.arange(steps + 1) / steps
    x = start.values.copy()
    for i in range(steps):
        v = field.evaluate(x, times[i], condition)
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"oracle diverged at step {i}", step=i)
        x = x + (times[i + 1] - times[i]) * v
    return LatentState(x, 1.0, start.shape)
