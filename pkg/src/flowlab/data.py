"""Synthetic sources, references and masks."""

from __future__ import annotations

import numpy as np

from flowlab.core import Condition, GridShape, LatentState, Mask, TimeGrid
from flowlab.errors import ConfigError, DivergenceError
from flowlab.fields import VelocityField
from flowlab.solver import euler_sample


def make_blob_grid(shape: GridShape, center, radius: float, amplitude: float) -> LatentState:
    """Gaussian bump exp(-r^2 / (2 radius^2)) scaled by ``amplitude`` on a zero background, at t = 1."""
    row, col = (float(c) for c in center)
    if not (0.0 <= row <= shape.rows - 1 and 0.0 <= col <= shape.cols - 1):
        raise ConfigError(f"blob center {center} outside a {shape.rows}x{shape.cols} grid")
    if not radius > 0.0:
        raise ConfigError(f"blob radius must be positive, got {radius}")
    r = np.arange(shape.rows, dtype=np.float64)[:, None] - row
    c = np.arange(shape.cols, dtype=np.float64)[None, :] - col
    grid = amplitude * np.exp(-(r * r + c * c) / (2.0 * radius * radius))
    return LatentState(grid.reshape(-1), 1.0, shape)


def make_box_mask(shape: GridShape, top: int, left: int, height: int, width: int) -> Mask:
    if height < 1 or width < 1:
        raise ConfigError("box mask must have positive height and width")
    if top < 0 or left < 0 or top + height > shape.rows or left + width > shape.cols:
        raise ConfigError(
            f"box ({top}, {left}, {height}, {width}) exceeds a {shape.rows}x{shape.cols} grid"
        )
    m = np.zeros((shape.rows, shape.cols))
    m[top : top + height, left : left + width] = 1.0
    return Mask(m.reshape(-1), shape)


def make_reconstructable_source(
    field: VelocityField,
    noise: LatentState,
    grid: TimeGrid,
    tol: float = 1e-13,
    max_iter: int = 500,
) -> LatentState:
    """Find s with s = euler_sample(field, noise, grid, Source(s)).final by fixed-point iteration.

    A source built this way is reconstructed exactly (to ``tol``) from
    ``noise``, so Recon-Inv recovers ``noise``. Converges when the field is a
    contraction in its condition payload. Consumes field evaluations.
    """
    s = euler_sample(field, noise, grid, Condition.none()).final.values
    for _ in range(max_iter):
        nxt = euler_sample(field, noise, grid, Condition.source(s)).final.values
        step = float(np.max(np.abs(nxt - s)))
        s = nxt
        if step <= tol * max(1.0, float(np.max(np.abs(s)))):
            return LatentState(s, 1.0, noise.shape)
    raise DivergenceError(f"source fixed point did not converge in {max_iter} iterations")
