"""Mask-guided selective denoising of the second stage."""

from __future__ import annotations

import numpy as np

from flowlab.core import Mask, PriorSampler, TimeGrid, as_array, sample_prior
from flowlab.errors import ConfigError, InvalidDimensionError, SingularTimeError
from flowlab.fields import VelocityField, check_condition
from flowlab.reinversion import EditConfig, EditOutcome, _shape_of, two_stage

MSD = "reinversion+msd"


def msd_velocity(model_v, state, source, t: float, mask, eta: float) -> np.ndarray:
    """M * v + (1 - M) * (eta * v_star + (1 - eta) * v), v_star = (source - state) / (1 - t).

    Fractional mask entries interpolate the two branches linearly.
    """
    v = as_array(model_v)
    x = as_array(state)
    s = as_array(source)
    m = mask.values if isinstance(mask, Mask) else as_array(mask)
    if not (v.size == x.size == s.size == m.size):
        raise InvalidDimensionError(
            f"length mismatch: velocity {v.size}, state {x.size}, source {s.size}, mask {m.size}"
        )
    if t >= 1.0 - 1e-12:
        raise SingularTimeError(f"deterministic velocity is singular at t={t!r}")
    if not (0.0 <= eta <= 1.0):
        raise ConfigError(f"eta must lie in [0, 1], got {eta}")
    v_star = (s - x) / (1.0 - t)
    return m * v + (1.0 - m) * (eta * v_star + (1.0 - eta) * v)


def msd_edit(
    field: VelocityField,
    source,
    reference,
    grid: TimeGrid,
    config: EditConfig,
    mask: Mask,
) -> EditOutcome:
    """ReInversion whose second stage follows the masked blend; NFE is unchanged."""
    shape = _shape_of(source)
    src = check_condition(field, source)
    ref = check_condition(field, reference)
    if mask.d != field.dim:
        raise InvalidDimensionError(f"mask has length {mask.d}, field expects {field.dim}")
    eta = config.eta

    def blended(field, ref_condition, source, meter):
        model = meter.velocity(field, ref_condition)
        return lambda x, t: msd_velocity(model(x, t), x, source, t, mask, eta)

    noise = sample_prior(PriorSampler(config.seed), field.dim, shape)
    return two_stage(field, noise, src, ref, grid, config, stage2=blended, method=MSD)
