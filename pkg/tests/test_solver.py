import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowlab.core import Condition, LatentState, PriorSampler, TimeGrid, sample_prior, uniform_grid
from flowlab.errors import ConfigError, DivergenceError, TimeMismatchError
from flowlab.fields import (
    AffineFieldSpec,
    SmoothRandomFieldSpec,
    VelocityField,
    affine_field,
    constant_field,
    deterministic_target_field,
    smooth_random_field,
)
from flowlab.solver import (
    closed_form_affine_solve,
    euler_sample,
    euler_sample_partial,
    oracle_solve,
)

X_FIELD = AffineFieldSpec.simple(1, a=1.0)


def _rk4(spec, x0, t0, t1, condition=None, steps=2000):
    """Independent reference: classical RK4 on dx/dt = a(t) x + k, restarted at each kink of a."""
    k = spec.offset(condition)
    f = lambda x, t: spec.a_at(t) * x + k  # noqa: E731
    nodes = spec.a_grid.times
    cuts = [t0] + [float(t) for t in nodes if t0 < t < t1] + [t1]
    x = np.array(x0, dtype=float)
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        h = (s1 - s0) / steps
        for j in range(steps):
            t = s0 + j * h
            k1 = f(x, t)
            k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = f(x + h * k3, t + h)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_x_field_hand_euler():
    traj = euler_sample(affine_field(X_FIELD), LatentState([1.0], 0.0), uniform_grid(2))
    assert traj.values()[:, 0].tolist() == [1.0, 1.5, 2.25]
    assert traj.final.time == 1.0
    assert traj.velocities[:, 0].tolist() == [1.0, 1.5]


def test_zero_field_keeps_start():
    start = sample_prior(PriorSampler(1), 4)
    traj = euler_sample(constant_field(np.zeros(4)), start, uniform_grid(9))
    assert all(np.array_equal(s.values, start.values) for s in traj.states)


def test_state_times_and_recurrence():
    field = smooth_random_field(SmoothRandomFieldSpec(4, 8, 16))
    grid = TimeGrid([0.0, 0.1, 0.35, 0.4, 0.8, 1.0])
    traj = euler_sample(field, sample_prior(PriorSampler(2), 8), grid)
    assert [s.time for s in traj.states] == list(grid.times)
    assert np.max(np.abs(traj.replay() - traj.values())) <= 1e-12
    assert field.eval_count == grid.n


def test_target_field_lands_on_target_from_zero():
    target = PriorSampler(5).normal(6)
    traj = euler_sample(deterministic_target_field(target), sample_prior(PriorSampler(6), 6), uniform_grid(18))
    assert np.allclose(traj.final.values, target, rtol=0, atol=1e-9)


def test_partial_full_range_matches_euler_sample():
    spec = SmoothRandomFieldSpec(1, 4, 8)
    start = sample_prior(PriorSampler(3), 4)
    a = euler_sample(smooth_random_field(spec), start, uniform_grid(6))
    b = euler_sample_partial(smooth_random_field(spec), start, uniform_grid(6), None, 0, 6)
    assert np.array_equal(a.values(), b.values())


def test_partial_counts_and_rejects_empty():
    grid = uniform_grid(18)
    f = smooth_random_field(SmoothRandomFieldSpec(1, 4, 8))
    traj = euler_sample_partial(f, LatentState(np.zeros(4), grid[4]), grid, Condition.none(), 4, 18)
    assert f.eval_count == 14 and traj.steps == 14 and traj.start_index == 4
    with pytest.raises(ConfigError):
        euler_sample_partial(f, LatentState(np.zeros(4), grid[4]), grid, None, 4, 4)
    with pytest.raises(TimeMismatchError):
        euler_sample_partial(f, LatentState(np.zeros(4), 0.0), grid, None, 4, 18)


class _Exploding(VelocityField):
    kind = "exploding"

    def _velocity(self, x, t, c):
        return np.full_like(x, np.nan) if t > 0.3 else np.ones_like(x)


def test_divergence_names_step():
    with pytest.raises(DivergenceError) as err:
        euler_sample(_Exploding(1), LatentState([1.0], 0.0), uniform_grid(4))
    assert err.value.step == 2


def test_closed_form_examples():
    drift = AffineFieldSpec.simple(2, a=0.0, b0=[0.5, -1.0])
    out = closed_form_affine_solve(drift, LatentState([1.0, 1.0], 0.2), None, 0.2, 0.7)
    assert np.allclose(out.values, [1.25, 0.5], atol=1e-15)
    e = closed_form_affine_solve(X_FIELD, LatentState([1.0], 0.0), None, 0.0, 1.0)
    assert abs(e.values[0] - math.e) <= 1e-12
    same = closed_form_affine_solve(X_FIELD, LatentState([3.0], 0.4), None, 0.4, 0.4)
    assert same.values.tolist() == [3.0]
    with pytest.raises(ConfigError):
        closed_form_affine_solve(X_FIELD, LatentState([1.0], 0.5), None, 0.5, 0.2)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=6), st.floats(-1.0, 1.0), st.floats(0.0, 0.9))
def test_closed_form_matches_rk4_piecewise_linear(a_values, b0, t0):
    spec = AffineFieldSpec(uniform_grid(len(a_values) - 1), a_values, 0.7 * np.eye(2), [b0, -b0])
    cond = Condition.source([0.3, -0.2])
    x0 = [0.4, -1.3]
    got = closed_form_affine_solve(spec, LatentState(x0, t0), cond, t0, 1.0).values
    ref = _rk4(spec, x0, t0, 1.0, cond)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-10)


def test_oracle_solve_examples():
    start = LatentState([1.0], 0.0)
    euler_oracle = [oracle_solve(affine_field(X_FIELD), start, refinement=r, closed_form=False).values[0]
                    for r in (1, 2, 4)]
    errs = [abs(v - math.e) for v in euler_oracle]
    assert errs[0] <= 2e-3
    assert 1.7 <= errs[0] / errs[1] <= 2.3 and 1.7 <= errs[1] / errs[2] <= 2.3
    assert abs(oracle_solve(affine_field(X_FIELD), start).values[0] - math.e) <= 1e-12
    z = sample_prior(PriorSampler(0), 3)
    assert np.array_equal(oracle_solve(constant_field(np.zeros(3)), z).values, z.values)


def test_trajectory_concatenation():
    grid = uniform_grid(4)
    f = constant_field([1.0])
    a = euler_sample_partial(f, LatentState([0.0], 0.0), grid, None, 0, 2)
    b = euler_sample_partial(f, a.final, grid, None, 2, 4)
    joined = a.then(b)
    assert joined.steps == 4 and joined.final.values[0] == 1.0
    assert joined.state_at(2).time == 0.5
    with pytest.raises(ConfigError):
        b.then(a)
