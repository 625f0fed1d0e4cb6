"""Verification suites behind ``flowlab verify``.

Each suite returns a list of :class:`Check`; a suite passes when all of its
checks pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from flowlab.core import Condition, LatentState, PriorSampler, sample_prior, uniform_grid
from flowlab.data import make_reconstructable_source
from flowlab.fields import (
    AffineFieldSpec,
    SmoothRandomFieldSpec,
    affine_field,
    deterministic_target_field,
    smooth_random_field,
)
from flowlab.fixtures import (
    ABLATION_STEPS,
    EDIT_FIXTURES,
    ETA_SWEEP,
    T_TAU_PAIR,
    identity_cases,
    insensitive_affine_specs,
)
from flowlab.inversion import error_identity_gap, ideal_invert_affine, recon_invert, vanilla_invert
from flowlab.metrics import l2, masked_l2
from flowlab.msd import msd_edit
from flowlab.reinversion import EditConfig, recon_inv_edit, reinversion_edit, transition_index
from flowlab.solver import closed_form_affine_solve, euler_sample, integrate


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.suite:<13} {self.name:<34} {self.detail}"


def suite_identity(count: int = 100) -> List[Check]:
    worst = 0.0
    positive = True
    t0 = time.perf_counter()
    for k, d, n, spec, source in identity_cases(count):
        field = smooth_random_field(spec)
        report, recon = recon_invert(field, source, PriorSampler(k), uniform_grid(n))
        gap = error_identity_gap(report, recon, source, recon.initial)
        scale = max(1.0, float(np.linalg.norm(source.values)))
        worst = max(worst, gap / scale)
        positive &= l2(source.values, recon.final.values) > 0.0
    elapsed = time.perf_counter() - t0
    return [
        Check("identity", f"eq8 gap over {count} runs", worst <= 1e-9, f"max scaled gap {worst:.3e}"),
        Check("identity", "recon errors nonzero", bool(positive), "both norms strictly positive"),
        Check("identity", "runtime < 10 s", elapsed < 10.0, f"{elapsed:.2f} s"),
    ]


def suite_nfe() -> List[Check]:
    grid = uniform_grid(18)
    spec = SmoothRandomFieldSpec(seed=7, dim=4)
    src = sample_prior(PriorSampler(1), 4).values
    ref = sample_prior(PriorSampler(2), 4).values
    results = {}
    for label, fn, det in (
        ("recon-inv", recon_inv_edit, False),
        ("reinversion", reinversion_edit, False),
        ("reinversion*", reinversion_edit, True),
    ):
        field = smooth_random_field(spec)
        out = fn(field, src, ref, grid, EditConfig(0.2, 1.0, det, seed=3))
        results[label] = (out.nfe, field.eval_count)
    expected = {"recon-inv": 36, "reinversion": 18, "reinversion*": 14}
    checks = [
        Check("nfe", f"{k} = {v}", results[k] == (v, v), f"reported {results[k][0]}, counter {results[k][1]}")
        for k, v in expected.items()
    ]
    triple = "/".join(str(results[k][0]) for k in expected)
    checks.append(Check("nfe", "triple 36/18/14", triple == "36/18/14", triple))
    return checks


def suite_vstar(states: int = 50) -> List[Check]:
    checks = []
    for n in (4, 18, 50):
        grid = uniform_grid(n)
        tau = transition_index(grid, 0.2)
        worst = 0.0
        for k in range(states):
            rng = PriorSampler(900 + 7 * n + k)
            target = rng.normal(8)
            start = LatentState(3.0 * rng.normal(8), grid[tau])
            v = deterministic_target_field(target)
            end = integrate(lambda x, t: v.evaluate(x, t), start, grid, tau, n).final.values
            worst = max(worst, float(np.linalg.norm(end - target)) / max(1.0, float(np.linalg.norm(target))))
        checks.append(Check("msd", f"v* lands on target, n={n}", worst <= 1e-9, f"max rel err {worst:.2e}"))
    return checks


def suite_msd() -> List[Check]:
    grid = uniform_grid(18)
    checks = suite_vstar()
    for fx in EDIT_FIXTURES:
        field, src, ref, mask = fx.field(), fx.source(), fx.reference(), fx.mask()
        cfg = EditConfig(0.2, 1.0, False, fx.noise_seed)
        out = msd_edit(field, src, ref, grid, cfg, mask)
        diff = np.abs(out.edited.values - src.values)
        bg = diff[mask.values == 0.0] / np.maximum(1.0, np.abs(src.values[mask.values == 0.0]))
        fg = diff[mask.values == 1.0]
        checks.append(Check("msd", f"{fx.name}: background exact", bool(bg.max() <= 1e-9), f"max {bg.max():.1e}"))
        checks.append(Check("msd", f"{fx.name}: foreground edited", bool(fg.max() > 1e-3), f"max {fg.max():.3f}"))
        plain = reinversion_edit(field, src, ref, grid, cfg)
        ones = msd_edit(field, src, ref, grid, cfg, mask.ones(mask.d, mask.shape))
        eta0 = msd_edit(field, src, ref, grid, EditConfig(0.2, 0.0, False, fx.noise_seed), mask)
        checks.append(Check("msd", f"{fx.name}: all-ones == reinversion",
                            bool(np.array_equal(ones.edited.values, plain.edited.values)), "bitwise"))
        checks.append(Check("msd", f"{fx.name}: eta=0 == reinversion",
                            bool(np.array_equal(eta0.edited.values, plain.edited.values)), "bitwise"))
    return checks


def _affine_forward_source(spec: AffineFieldSpec, seed: int, n: int):
    noise = sample_prior(PriorSampler(seed), spec.dim)
    return euler_sample(affine_field(spec), noise, uniform_grid(n)).final


def suite_reformulation() -> List[Check]:
    checks = []
    for name, spec in insensitive_affine_specs():
        for n, seed in ((18, 4), (10, 9)):
            grid = uniform_grid(n)
            src = _affine_forward_source(spec, seed, n)
            ref = sample_prior(PriorSampler(seed + 100), spec.dim).values
            cfg = EditConfig(0.2, 1.0, False, seed)
            a = recon_inv_edit(affine_field(spec), src, ref, grid, cfg)
            b = reinversion_edit(affine_field(spec), src, ref, grid, cfg)
            rel = l2(a.edited.values, b.edited.values) / max(1.0, float(np.linalg.norm(b.edited.values)))
            tr = l2(a.transition_state.values, b.trajectory.state_at(b.stage_boundary).values)
            checks.append(Check("reformulation", f"{name} n={n}: terminals agree", rel <= 1e-8, f"rel {rel:.1e}"))
            checks.append(Check("reformulation", f"{name} n={n}: transition states", tr <= 1e-9, f"abs {tr:.1e}"))
    return checks


def _curved_fixtures():
    """(name, field factory, source, true noise, grid) with exactly reconstructable sources."""
    x_spec = AffineFieldSpec.simple(1, a=1.0)
    for n in (2, 4, 8, 18):
        grid = uniform_grid(n)
        noise = LatentState([1.0], 0.0)
        src = euler_sample(affine_field(x_spec), noise, grid).final
        yield f"x-field n={n}", lambda s=x_spec: affine_field(s), src, noise, grid
    for name, spec in insensitive_affine_specs():
        if not np.any(spec.a_values != 0.0):
            continue
        grid = uniform_grid(12)
        noise = sample_prior(PriorSampler(31), spec.dim)
        src = euler_sample(affine_field(spec), noise, grid).final
        yield f"affine {name}", lambda s=spec: affine_field(s), src, noise, grid
    for seed in range(4):
        spec = SmoothRandomFieldSpec(seed=200 + seed, dim=16, hidden_width=16, gain=1.0)
        grid = uniform_grid(12)
        noise = sample_prior(PriorSampler(seed), 16)
        src = make_reconstructable_source(smooth_random_field(spec), noise, grid)
        yield f"smooth seed={200 + seed}", lambda s=spec: smooth_random_field(s), src, noise, grid


def suite_drift() -> List[Check]:
    checks = []
    x_spec = AffineFieldSpec.simple(1, a=1.0)
    grid = uniform_grid(2)
    src = LatentState([2.25], 1.0)
    van = float(vanilla_invert(affine_field(x_spec), src, grid).estimated_noise.values[0])
    rec, _ = recon_invert(affine_field(x_spec), src, None, grid, noise=LatentState([1.0], 0.0))
    ideal = float(ideal_invert_affine(x_spec, src, grid).estimated_noise.values[0])
    checks.append(Check("drift", "vanilla x-field -> 0.5625", van == 0.5625, f"{van!r}, error {1.0 - van!r}"))
    recon_val = float(rec.estimated_noise.values[0])
    checks.append(Check("drift", "recon-inv x-field -> 1.0", abs(recon_val - 1.0) <= 1e-12, f"{recon_val!r}"))
    checks.append(Check("drift", "ideal affine x-field -> 1.0", ideal == 1.0, f"{ideal!r}"))
    for name, make, src, noise, grid in _curved_fixtures():
        cond = Condition.source(src.values)
        van_err = l2(vanilla_invert(make(), src, grid, cond).estimated_noise.values, noise.values)
        rec_report, _ = recon_invert(make(), src, None, grid, noise=noise)
        rec_err = l2(rec_report.estimated_noise.values, noise.values)
        ok = van_err > 0.0 and van_err >= 10.0 * rec_err
        checks.append(Check("drift", f"{name}: vanilla >= 10x recon", ok, f"{van_err:.3e} vs {rec_err:.1e}"))
    return checks


def suite_convergence() -> List[Check]:
    spec = AffineFieldSpec.simple(1, a=1.0)
    start = LatentState([1.0], 0.0)
    exact = float(closed_form_affine_solve(spec, start, None, 0.0, 1.0).values[0])
    errors = []
    for n in (8, 16, 32, 64):
        end = euler_sample(affine_field(spec), start, uniform_grid(n)).final.values[0]
        errors.append(abs(float(end) - exact))
    checks = [Check("convergence", "closed form = e", abs(exact - math.e) <= 1e-12, f"{exact!r}")]
    for (n, e1), e2 in zip(zip((8, 16, 32), errors), errors[1:]):
        ratio = e1 / e2
        checks.append(Check("convergence", f"error ratio n={n}->{2 * n}", 1.7 <= ratio <= 2.3, f"{ratio:.4f}"))
    return checks


def suite_ablation() -> List[Check]:
    grid = uniform_grid(ABLATION_STEPS)
    checks = []
    early, late = T_TAU_PAIR
    for fx in EDIT_FIXTURES:
        field, src, ref, mask = fx.field(), fx.source(), fx.reference(), fx.mask()
        dists = [
            l2(reinversion_edit(field, src, ref, grid, EditConfig(t, 1.0, True, fx.noise_seed)).edited.values,
               src.values)
            for t in (early, late)
        ]
        checks.append(Check("ablation", f"{fx.name}: t_tau direction", dists[0] > dists[1],
                            f"{dists[0]:.3f} > {dists[1]:.3f}"))
        bg = [
            masked_l2(msd_edit(field, src, ref, grid, EditConfig(0.2, eta, False, fx.noise_seed), mask).edited.values,
                      src.values, 1.0 - mask.values)
            for eta in ETA_SWEEP
        ]
        mono = all(b2 <= b1 for b1, b2 in zip(bg, bg[1:]))
        checks.append(Check("ablation", f"{fx.name}: eta monotone", mono, " ".join(f"{b:.3f}" for b in bg)))
    return checks


SUITES: Dict[str, Callable[[], List[Check]]] = {
    "identity": suite_identity,
    "nfe": suite_nfe,
    "msd": suite_msd,
    "reformulation": suite_reformulation,
    "drift": suite_drift,
    "convergence": suite_convergence,
    "ablation": suite_ablation,
}


def run_suite(name: str) -> List[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    return SUITES[name]()


def failed_suites(checks: List[Check]) -> List[str]:
    return sorted({c.suite for c in checks if not c.passed})
