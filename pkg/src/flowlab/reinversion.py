"""Two-stage editing: source-conditioned up to the transition node, reference-conditioned after.

NFE here means calls to a field with ``counts_as_model``; the deterministic
target velocity is free. Pipelines count their own calls, so reported NFE is
exact even when a field object is shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from flowlab.core import (
    TIME_TOL,
    Condition,
    GridShape,
    LatentState,
    PriorSampler,
    TimeGrid,
    sample_prior,
)
from flowlab.errors import ConfigError, DegenerateSplitError
from flowlab.fields import VelocityField, check_condition, deterministic_target_field
from flowlab.inversion import recon_invert
from flowlab.solver import Trajectory, integrate

REINVERSION = "reinversion"
RECON_INV_EDIT = "recon-inv"


@dataclass(frozen=True)
class EditConfig:
    t_tau: float = 0.2
    eta: float = 1.0
    deterministic_stage1: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.t_tau < 1.0):
            raise ConfigError(f"t_tau must lie in (0, 1), got {self.t_tau}")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "t_tau": self.t_tau,
            "eta": self.eta,
            "deterministic_stage1": self.deterministic_stage1,
            "seed": int(self.seed),
        }


@dataclass(frozen=True, eq=False)
class EditOutcome:
    edited: LatentState
    trajectory: Trajectory
    nfe: int
    stage_boundary: int
    method: str = REINVERSION
    noise: Optional[LatentState] = None
    # reconstruction-based pipeline only: source minus the cached velocities from τ on
    transition_state: Optional[LatentState] = None

    def summary(self, config: Optional[EditConfig] = None) -> dict:
        doc = {
            "method": self.method,
            "nfe": self.nfe,
            "tau": self.stage_boundary,
            "n": self.trajectory.grid.n,
        }
        if config is not None:
            doc.update(config.to_dict())
        return doc


def transition_index(grid: TimeGrid, t_tau: float) -> int:
    """Smallest node index i with t_i >= t_tau (up to 1e-12), required to lie in [1, n-1]."""
    if not (0.0 < t_tau < 1.0):
        raise ConfigError(f"t_tau must lie in (0, 1), got {t_tau}")
    idx = int(np.argmax(grid.times >= t_tau - TIME_TOL))
    if idx < 1 or idx > grid.n - 1:
        raise DegenerateSplitError(
            f"t_tau={t_tau} snaps to node {idx} on an n={grid.n} grid; one stage would be empty"
        )
    return idx


class _Meter:
    def __init__(self):
        self.count = 0

    def velocity(self, field: VelocityField, condition: Condition):
        def v(x, t):
            out = field.evaluate(x, t, condition)
            if field.counts_as_model:
                self.count += 1
            return out

        return v


Stage2Builder = Callable[[VelocityField, Condition, np.ndarray, "_Meter"], Callable]


def _reference_velocity(field, ref_condition, source, meter):
    return meter.velocity(field, ref_condition)


def _shape_of(values) -> Optional[GridShape]:
    return values.shape if isinstance(values, LatentState) else None


def two_stage(
    field: VelocityField,
    start: LatentState,
    source: np.ndarray,
    reference: np.ndarray,
    grid: TimeGrid,
    config: EditConfig,
    stage2: Stage2Builder = _reference_velocity,
    method: str = REINVERSION,
) -> EditOutcome:
    """Run stage 1 over [0, τ) and stage 2 over [τ, n) from ``start`` at t = 0."""
    tau = transition_index(grid, config.t_tau)
    meter = _Meter()
    src_cond = Condition.source(source)
    if config.deterministic_stage1:
        if source.size != field.dim:
            raise ConfigError("a deterministic first stage needs a source of the state dimension")
        v1 = meter.velocity(deterministic_target_field(source), src_cond)
    else:
        v1 = meter.velocity(field, src_cond)
    first = integrate(v1, start, grid, 0, tau, src_cond)
    ref_cond = Condition.reference(reference)
    second = integrate(stage2(field, ref_cond, source, meter), first.final, grid, tau, grid.n, ref_cond)
    traj = first.then(second)
    return EditOutcome(traj.final, traj, meter.count, tau, method, start)


def reinversion_edit(
    field: VelocityField,
    source,
    reference,
    grid: TimeGrid,
    config: EditConfig,
) -> EditOutcome:
    """Sample seeded noise and denoise it under the source, then under the reference.

    With ``deterministic_stage1`` the first stage follows (source - x) / (1 - t)
    instead of the model, so only the n - τ second-stage steps cost evaluations.
    """
    shape = _shape_of(source)
    src = check_condition(field, source)
    ref = check_condition(field, reference)
    noise = sample_prior(PriorSampler(config.seed), field.dim, shape)
    return two_stage(field, noise, src, ref, grid, config)


def recon_inv_edit(
    field: VelocityField,
    source,
    reference,
    grid: TimeGrid,
    config: EditConfig,
) -> EditOutcome:
    """Reconstruction-based pipeline: reconstruct, invert along cached velocities, then edit.

    The edit pass starts from the inverted noise and runs the same two stages
    as ``reinversion_edit``, so the total is n (reconstruction) plus the edit
    pass cost: 2n with a model first stage. The inverted state at node τ is
    returned as ``transition_state``.
    """
    shape = _shape_of(source)
    src = check_condition(field, source)
    ref = check_condition(field, reference)
    tau = transition_index(grid, config.t_tau)
    report, recon = recon_invert(field, LatentState(src, 1.0, shape), PriorSampler(config.seed), grid)
    edit = two_stage(field, report.estimated_noise, src, ref, grid, config, method=RECON_INV_EDIT)
    recon_cost = recon.steps if field.counts_as_model else 0
    return EditOutcome(
        edit.edited,
        edit.trajectory,
        recon_cost + edit.nfe,
        tau,
        RECON_INV_EDIT,
        report.estimated_noise,
        report.intermediate_states[tau],
    )


def nfe_speedup(a: EditOutcome, b: EditOutcome) -> float:
    """NFE ratio a / b (how many times fewer evaluations b needs)."""
    if a.trajectory.grid != b.trajectory.grid:
        raise ConfigError("outcomes come from different grids")
    if b.nfe == 0:
        raise ConfigError("cannot divide by an outcome with zero NFE")
    return a.nfe / b.nfe
