import numpy as np
import pytest

from flowlab.core import Condition, LatentState, PriorSampler, uniform_grid
from flowlab.errors import ConditionDimensionError, InvalidDimensionError, SingularTimeError
from flowlab.fields import (
    MAX_EVAL_TIME,
    AffineFieldSpec,
    SmoothRandomFieldSpec,
    affine_field,
    constant_field,
    deterministic_target_field,
    smooth_random_field,
)
from flowlab.inversion import vanilla_invert
from flowlab.solver import euler_sample, integrate


def test_constant_field_examples():
    f = constant_field([1.0, -2.0])
    for t in (0.0, 0.3, MAX_EVAL_TIME):
        assert f.evaluate([5.0, 7.0], t).tolist() == [1.0, -2.0]
    f2 = constant_field([1.0])
    for _ in range(5):
        f2.evaluate([0.0], 0.1)
    assert f2.eval_count == 5


def test_constant_field_round_trip_is_exact():
    f = constant_field([0.3, -1.7])
    grid = uniform_grid(7)
    start = LatentState([0.1, 0.2], 0.0)
    end = euler_sample(f, start, grid).final
    back = vanilla_invert(f, end, grid).estimated_noise
    # same float ops in reverse: the x-independent velocity makes the round trip exact up to rounding
    assert np.allclose(back.values, start.values, rtol=0, atol=1e-15)


def test_field_rejects_evaluation_at_one():
    f = constant_field([1.0])
    with pytest.raises(SingularTimeError):
        f.evaluate([0.0], 1.0)
    f.evaluate([0.0], MAX_EVAL_TIME)


def test_field_checks_dimension():
    with pytest.raises(InvalidDimensionError):
        constant_field([1.0, 2.0]).evaluate([1.0], 0.0)


def test_deterministic_target_examples():
    v = deterministic_target_field([4.0])
    assert v.evaluate([0.0], 0.2).tolist() == [pytest.approx(5.0)]
    x = np.array([1.5, -2.0])
    assert np.all(deterministic_target_field(x).evaluate(x, 0.7) == 0.0)
    with pytest.raises(SingularTimeError):
        v.evaluate([0.0], 1.0 - 1e-13)
    assert not v.counts_as_model


def test_deterministic_target_lands_on_target_hand_grid():
    from flowlab.core import TimeGrid

    grid = TimeGrid([0.0, 0.2, 0.6, 1.0])
    v = deterministic_target_field([4.0])
    traj = integrate(lambda x, t: v.evaluate(x, t), LatentState([0.0], 0.2), grid, 1, 3)
    assert traj.states[1].values[0] == pytest.approx(2.0, abs=1e-15)
    assert traj.final.values[0] == pytest.approx(4.0, abs=1e-14)


def test_affine_x_field():
    f = affine_field(AffineFieldSpec.simple(1, a=1.0))
    assert f.evaluate([1.0], 0.37).tolist() == [1.0]
    traj = euler_sample(f, LatentState([1.0], 0.0), uniform_grid(2))
    assert [s.values[0] for s in traj.states] == [1.0, 1.5, 2.25]


def test_affine_condition_term_and_mismatch():
    spec = AffineFieldSpec.simple(2, a=0.0, b0=[1.0, 1.0], b_scale=2.0)
    f = affine_field(spec)
    out = f.evaluate([0.0, 0.0], 0.5, Condition.source([1.0, -1.0]))
    assert out.tolist() == [3.0, -1.0]
    with pytest.raises(ConditionDimensionError):
        f.evaluate([0.0, 0.0], 0.5, Condition.source([1.0, 2.0, 3.0]))
    assert spec.condition_sensitive
    assert not AffineFieldSpec.simple(2).condition_sensitive


def test_affine_spec_dict_round_trip():
    spec = AffineFieldSpec(uniform_grid(2), [1.0, -1.0, 0.5], 0.1 * np.eye(3), [1.0, 2.0, 3.0])
    again = AffineFieldSpec.from_dict(spec.to_dict())
    for t in (0.0, 0.25, 0.9):
        assert again.a_at(t) == spec.a_at(t)
    assert np.array_equal(again.b_weights, spec.b_weights)


def test_piecewise_linear_a():
    spec = AffineFieldSpec(uniform_grid(2), [0.0, 2.0, -2.0], np.zeros((1, 1)), [0.0])
    assert spec.a_at(0.25) == pytest.approx(1.0)
    assert spec.a_at(0.75) == pytest.approx(0.0)


def _random_field(seed=3, d=5, gain=1.0, cdim=None):
    return smooth_random_field(SmoothRandomFieldSpec(seed, d, 12, gain, cdim))


def test_smooth_random_determinism_and_gain():
    x = PriorSampler(1).normal(5)
    a = _random_field().evaluate(x, 0.3)
    b = _random_field().evaluate(x, 0.3)
    assert np.array_equal(a, b)
    assert np.all(_random_field(gain=0.0).evaluate(x, 0.3) == 0.0)


def test_smooth_random_condition_sensitivity():
    f = _random_field()
    x = PriorSampler(1).normal(5)
    c1 = Condition.source(PriorSampler(2).normal(5))
    c2 = Condition.reference(PriorSampler(3).normal(5))
    assert not np.allclose(f.evaluate(x, 0.4, c1), f.evaluate(x, 0.4, c2))


def test_smooth_random_jacobian_matches_finite_differences():
    rng = PriorSampler(11)
    f = _random_field(seed=5, d=6)
    h = 1e-6
    for _ in range(5):
        x = rng.normal(6)
        t = float(abs(rng.normal(1)[0]) % 0.9)
        cond = Condition.source(rng.normal(6))
        jac = f.jacobian_x(x, t, cond)
        fd = np.empty_like(jac)
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            fd[:, j] = (f.evaluate(x + e, t, cond) - f.evaluate(x - e, t, cond)) / (2 * h)
        assert np.linalg.norm(jac - fd) <= 1e-6 * np.linalg.norm(jac)


def test_jacobian_does_not_count():
    f = _random_field()
    f.jacobian_x(np.zeros(5), 0.1)
    assert f.eval_count == 0


def test_eval_count_is_thread_safe():
    from concurrent.futures import ThreadPoolExecutor

    f = constant_field([1.0])
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda _: f.evaluate([0.0], 0.5), range(400)))
    assert f.eval_count == 400
