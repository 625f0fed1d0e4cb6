"""Shipped fixture suites used by ``flowlab verify`` and the test suite.

Every fixture is a plain value; building one constructs fresh field objects so
fixtures can be evaluated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from flowlab.core import GridShape, LatentState, Mask, PriorSampler, sample_prior, uniform_grid
from flowlab.data import make_blob_grid, make_box_mask
from flowlab.fields import (
    AffineFieldSpec,
    SmoothRandomField,
    SmoothRandomFieldSpec,
    smooth_random_field,
)

GRID_16 = GridShape(16, 16)


@dataclass(frozen=True)
class EditFixture:
    """A 16x16 source/reference pair with a box mask, edited by a smooth random field."""

    name: str
    field_seed: int
    gain: float
    source_blob: Tuple[Tuple[float, float], float, float]  # center, radius, amplitude
    reference_blob: Tuple[Tuple[float, float], float, float]
    box: Tuple[int, int, int, int]  # top, left, height, width
    noise_seed: int
    hidden_width: int = 32

    def field(self) -> SmoothRandomField:
        return smooth_random_field(
            SmoothRandomFieldSpec(self.field_seed, GRID_16.size, self.hidden_width, self.gain)
        )

    def source(self) -> LatentState:
        return make_blob_grid(GRID_16, *self.source_blob)

    def reference(self) -> LatentState:
        return make_blob_grid(GRID_16, *self.reference_blob)

    def mask(self) -> Mask:
        return make_box_mask(GRID_16, *self.box)


EDIT_FIXTURES = (
    EditFixture("blob-swap", 0, 1.0, ((5, 5), 2.5, 1.0), ((10, 9), 3.0, -1.5), (6, 5, 8, 8), 11),
    EditFixture("corner-box", 1, 1.0, ((4, 11), 2.0, 2.0), ((11, 4), 2.5, 1.0), (0, 0, 6, 6), 5),
    EditFixture("strong-gain", 2, 2.0, ((8, 8), 3.0, 1.0), ((8, 8), 2.0, -2.0), (4, 4, 8, 8), 23),
    EditFixture("thin-box", 3, 0.5, ((3, 3), 2.0, 1.5), ((12, 12), 2.0, 1.5), (2, 1, 3, 14), 42),
)

# (t_tau early, t_tau late) for the transition-time ablation; n = 18.
T_TAU_PAIR = (0.05, 0.5)
ETA_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)
ABLATION_STEPS = 18


def identity_cases(count: int = 100):
    """(case index, d, n, field spec, source) for the error-identity property."""
    for k in range(count):
        d = (2, 256)[k % 2]
        n = (4, 18)[(k // 2) % 2]
        spec = SmoothRandomFieldSpec(seed=1000 + k, dim=d, hidden_width=16, gain=1.0)
        source = sample_prior(PriorSampler(50_000 + k), d).at(1.0)
        yield k, d, n, spec, source


def insensitive_affine_specs():
    """Condition-insensitive affine fields (B = 0) for reconstruction-exact fixtures."""
    d = 6
    zero_b = np.zeros((d, d))
    yield "x-field", AffineFieldSpec.simple(d, a=1.0)
    yield "decay-drift", AffineFieldSpec.simple(d, a=-1.5, b0=0.3)
    yield "ramp", AffineFieldSpec(
        uniform_grid(4), [0.5, -1.0, 2.0, 0.0, 1.0], zero_b, np.linspace(-1.0, 1.0, d)
    )
