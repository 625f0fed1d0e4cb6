import numpy as np
import pytest

from flowlab.core import Condition, LatentState, PriorSampler, sample_prior, uniform_grid
from flowlab.errors import ConfigError, InvalidDimensionError, SingularInversionError, TimeMismatchError
from flowlab.fields import AffineFieldSpec, SmoothRandomFieldSpec, affine_field, constant_field, smooth_random_field
from flowlab.fixtures import identity_cases
from flowlab.inversion import error_identity_gap, ideal_invert_affine, recon_invert, vanilla_invert
from flowlab.solver import euler_sample

X_FIELD = AffineFieldSpec.simple(1, a=1.0)
SRC = LatentState([2.25], 1.0)


def test_vanilla_x_field():
    rep = vanilla_invert(affine_field(X_FIELD), SRC, uniform_grid(2))
    assert rep.estimated_noise.values.tolist() == [0.5625]
    assert [s.values[0] for s in rep.intermediate_states] == [0.5625, 1.125, 2.25]
    assert rep.nfe == 2
    assert rep.metadata["top_step_eval_time"] == 1.0 - 1e-9


def test_vanilla_constant_and_zero_fields():
    grid = uniform_grid(5)
    src = LatentState([1.0, 2.0], 1.0)
    rep = vanilla_invert(constant_field([0.5, -1.0]), src, grid)
    assert np.allclose(rep.estimated_noise.values, [0.5, 3.0], atol=1e-15)
    zero = vanilla_invert(constant_field([0.0, 0.0]), src, grid)
    assert all(np.array_equal(s.values, src.values) for s in zero.intermediate_states)


def test_vanilla_requires_time_one():
    with pytest.raises(TimeMismatchError):
        vanilla_invert(affine_field(X_FIELD), LatentState([1.0], 0.5), uniform_grid(2))


def test_ideal_affine_x_field_exact():
    rep = ideal_invert_affine(X_FIELD, SRC, uniform_grid(2))
    assert rep.estimated_noise.values.tolist() == [1.0]
    assert rep.nfe == 0


def test_ideal_affine_inverts_forward_on_random_specs():
    rng = np.random.default_rng(2024)
    for k in range(20):
        d = 3
        n_a = int(rng.integers(1, 5))
        spec = AffineFieldSpec(
            uniform_grid(n_a), rng.uniform(-1.5, 1.5, n_a + 1), rng.normal(size=(d, d)), rng.normal(size=d)
        )
        cond = Condition.source(rng.normal(size=d))
        grid = uniform_grid(int(rng.integers(2, 20)))
        start = sample_prior(PriorSampler(k), d)
        end = euler_sample(affine_field(spec), start, grid, cond).final
        back = ideal_invert_affine(spec, end, grid, cond).estimated_noise
        assert np.allclose(back.values, start.values, rtol=0, atol=1e-10)


def test_ideal_equals_vanilla_when_a_is_zero():
    spec = AffineFieldSpec.simple(2, a=0.0, b0=[0.3, -0.1])
    src = LatentState([1.0, 1.0], 1.0)
    grid = uniform_grid(6)
    a = ideal_invert_affine(spec, src, grid).values()
    b = vanilla_invert(affine_field(spec), src, grid).values()
    assert np.array_equal(a, b)


def test_ideal_singular_step():
    spec = AffineFieldSpec.simple(1, a=-2.0)
    with pytest.raises(SingularInversionError):
        ideal_invert_affine(spec, LatentState([1.0], 1.0), uniform_grid(2))


def test_recon_invert_exact_fixture():
    grid = uniform_grid(2)
    rep, recon = recon_invert(affine_field(X_FIELD), SRC, None, grid, noise=LatentState([1.0], 0.0))
    assert abs(rep.estimated_noise.values[0] - 1.0) <= 1e-12
    assert rep.nfe == 2
    gap = error_identity_gap(rep, recon, SRC, recon.initial)
    assert gap == 0.0


def test_recon_invert_needs_noise_source():
    with pytest.raises(ConfigError):
        recon_invert(affine_field(X_FIELD), SRC, None, uniform_grid(2))


def test_recon_identity_elementwise():
    field = smooth_random_field(SmoothRandomFieldSpec(9, 10, 16))
    src = sample_prior(PriorSampler(10), 10).at(1.0)
    rep, recon = recon_invert(field, src, PriorSampler(4), uniform_grid(18))
    lhs = rep.estimated_noise.values - recon.initial.values
    rhs = src.values - recon.final.values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)
    assert np.linalg.norm(rhs) > 0.1
    assert field.eval_count == 18 == rep.nfe


def test_identity_gap_100_runs():
    worst = 0.0
    for _, d, n, spec, src in identity_cases(100):
        rep, recon = recon_invert(smooth_random_field(spec), src, PriorSampler(7 + d + n), uniform_grid(n))
        gap = error_identity_gap(rep, recon, src, recon.initial)
        worst = max(worst, gap / max(1.0, np.linalg.norm(src.values)))
        assert np.linalg.norm(src.values - recon.final.values) > 0
    assert worst <= 1e-9


def test_identity_breaks_with_perturbed_velocity():
    grid = uniform_grid(8)
    field = smooth_random_field(SmoothRandomFieldSpec(1, 3, 8))
    src = sample_prior(PriorSampler(1), 3).at(1.0)
    rep, recon = recon_invert(field, src, PriorSampler(2), grid)
    delta = 0.01
    vel = recon.velocities.copy()
    vel[3, 0] += delta
    # backward pass with the perturbed cache, built by hand
    x = src.values.copy()
    for i in range(grid.n - 1, -1, -1):
        x = x - grid.delta(i) * vel[i]
    # the elementwise identity is off by exactly delta_i * delta on the perturbed coordinate
    mismatch = (x - recon.initial.values) - (src.values - recon.final.values)
    assert np.linalg.norm(mismatch) >= grid.delta(3) * delta * (1 - 1e-6)
    assert np.linalg.norm(mismatch) <= grid.delta(3) * delta * (1 + 1e-6)


def test_identity_gap_dimension_check():
    rep, recon = recon_invert(affine_field(X_FIELD), SRC, None, uniform_grid(2), noise=LatentState([1.0], 0.0))
    with pytest.raises(InvalidDimensionError):
        error_identity_gap(rep, recon, LatentState([1.0, 2.0], 1.0), recon.initial)
