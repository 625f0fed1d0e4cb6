"""Distances and drift curves."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from flowlab.core import as_array
from flowlab.errors import ConfigError, InvalidDimensionError


def _pair(a, b):
    a = as_array(a)
    b = as_array(b)
    if a.size != b.size:
        raise InvalidDimensionError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def l2(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.linalg.norm(a - b))


def mean_abs(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def drift_curve(report, forward) -> List[Tuple[float, float]]:
    """Per-node L2 distance between a backward pass and the forward trajectory it should retrace."""
    fwd = forward.states
    back = report.intermediate_states
    if len(fwd) != len(back) or forward.start_index != 0:
        raise ConfigError("drift curve needs a full forward trajectory on the same grid")
    out = []
    for b, f in zip(back, fwd):
        if b.time != f.time:
            raise ConfigError(f"node times differ: {b.time} vs {f.time}")
        out.append((f.time, l2(b.values, f.values)))
    return out


def masked_l2(a, b, weights) -> float:
    """L2 distance restricted by per-coordinate weights (e.g. 1 - mask for the background)."""
    a, b = _pair(a, b)
    w = as_array(weights)
    if w.size != a.size:
        raise InvalidDimensionError("weight length mismatch")
    return float(np.linalg.norm(w * (a - b)))
