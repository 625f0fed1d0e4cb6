"""Backward procedures: vanilla (approximate), ideal (affine only) and reconstruction-based."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Tuple

import numpy as np

from flowlab.core import (
    Condition,
    LatentState,
    PriorSampler,
    TimeGrid,
    as_array,
    check_time,
    sample_prior,
)
from flowlab.errors import ConfigError, DivergenceError, InvalidDimensionError, SingularInversionError
from flowlab.fields import MAX_EVAL_TIME, AffineFieldSpec, VelocityField
from flowlab.solver import Trajectory, euler_sample

VANILLA = "vanilla"
IDEAL_AFFINE = "ideal-affine"
RECON_INV = "recon"


@dataclass(frozen=True, eq=False)
class InversionReport:
    estimated_noise: LatentState
    intermediate_states: List[LatentState]  # indexed by grid node, 0..n
    nfe: int
    method: str
    metadata: dict = dc_field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.intermediate_states])


def _source_state(source) -> LatentState:
    if isinstance(source, LatentState):
        check_time(source, 1.0, "source")
        return source
    return LatentState(as_array(source), 1.0)


def _finish(states_desc, shape, grid: TimeGrid) -> List[LatentState]:
    # states_desc runs from node n down to node 0
    vals = states_desc[::-1]
    return [LatentState(v, grid[i], shape) for i, v in enumerate(vals)]


def vanilla_invert(
    field: VelocityField,
    source: LatentState,
    grid: TimeGrid,
    condition: Optional[Condition] = None,
) -> InversionReport:
    """x_i = x_{i+1} - Δ_i v(x_{i+1}, t_{i+1}); the top step evaluates at 1 - 1e-9."""
    source = _source_state(source)
    if source.d != field.dim:
        raise InvalidDimensionError(f"source has d={source.d}, field expects {field.dim}")
    x = source.values
    states = [x]
    for i in range(grid.n - 1, -1, -1):
        t_eval = min(grid[i + 1], MAX_EVAL_TIME)
        x = x - grid.delta(i) * field.evaluate(x, t_eval, condition)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"vanilla inversion diverged at step {i}", step=i)
        states.append(x)
    inter = _finish(states, source.shape, grid)
    return InversionReport(
        inter[0],
        inter,
        grid.n if field.counts_as_model else 0,
        VANILLA,
        {"top_step_eval_time": min(grid[grid.n], MAX_EVAL_TIME)},
    )


def ideal_invert_affine(
    spec: AffineFieldSpec,
    source: LatentState,
    grid: TimeGrid,
    condition: Optional[Condition] = None,
) -> InversionReport:
    """Exact inverse of forward Euler for an affine field: one scalar solve per step."""
    source = _source_state(source)
    if source.d != spec.dim:
        raise InvalidDimensionError(f"source has d={source.d}, spec expects {spec.dim}")
    k = spec.offset(condition)
    x = source.values
    states = [x]
    for i in range(grid.n - 1, -1, -1):
        dt = grid.delta(i)
        denom = 1.0 + spec.a_at(grid[i]) * dt
        if denom == 0.0:
            raise SingularInversionError(f"a(t_{i}) * Δ_{i} = -1; step {i} is not invertible")
        x = (x - dt * k) / denom
        states.append(x)
    inter = _finish(states, source.shape, grid)
    return InversionReport(inter[0], inter, 0, IDEAL_AFFINE)


def recon_invert(
    field: VelocityField,
    source: LatentState,
    noise_seed: Optional[PriorSampler],
    grid: TimeGrid,
    noise: Optional[LatentState] = None,
) -> Tuple[InversionReport, Trajectory]:
    """Reconstruct the source from seeded noise, then walk back along the cached velocities.

    ``noise`` pins the starting noise explicitly instead of drawing it from
    ``noise_seed``. Returns the report and the reconstruction trajectory;
    ``trajectory.initial`` is the true noise the reconstruction started from.
    """
    source = _source_state(source)
    if noise is None:
        if noise_seed is None:
            raise ConfigError("recon_invert needs a noise seed or an explicit noise state")
        noise = sample_prior(noise_seed, field.dim, source.shape)
    recon = euler_sample(field, noise, grid, Condition.source(source.values))
    x = source.values
    states = [x]
    for i in range(grid.n - 1, -1, -1):
        x = x - grid.delta(i) * recon.velocities[i]
        states.append(x)
    inter = _finish(states, source.shape, grid)
    report = InversionReport(inter[0], inter, recon.steps if field.counts_as_model else 0, RECON_INV)
    return report, recon


def error_identity_gap(
    report: InversionReport,
    trajectory: Trajectory,
    source: LatentState,
    true_noise: LatentState,
) -> float:
    """| ||x̃_0 - x_0|| - ||source - x̂_1|| |; zero up to rounding for a reconstruction-based report."""
    est = report.estimated_noise.values
    x0 = as_array(true_noise)
    src = as_array(source)
    recon_end = trajectory.final.values
    if not (est.size == x0.size == src.size == recon_end.size):
        raise InvalidDimensionError("identity gap inputs have mismatched dimensions")
    inv_err = float(np.linalg.norm(est - x0))
    rec_err = float(np.linalg.norm(src - recon_end))
    return abs(inv_err - rec_err)
