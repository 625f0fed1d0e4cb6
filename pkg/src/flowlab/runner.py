"""Command implementations: build inputs from a resolved config, run, write artifacts.

Every run directory gets a ``metadata.json`` whose ``config`` section is the
fully resolved configuration; feeding that file back through ``--config``
reproduces the run's files byte for byte. Nothing time- or path-dependent is
written, so reruns compare equal.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from flowlab import __version__
from flowlab.config import build_field, build_grid, build_mask, build_state, resolve
from flowlab.core import GENERATOR_NAME, Condition, PriorSampler
from flowlab.errors import CapabilityError
from flowlab.fields import AffineField
from flowlab.fixtures import EDIT_FIXTURES, EditFixture
from flowlab.inversion import (
    error_identity_gap,
    ideal_invert_affine,
    recon_invert,
    vanilla_invert,
)
from flowlab.io import (
    csv_text,
    curve_csv,
    inversion_csv,
    trajectory_csv,
    velocities_csv,
    write_pgm,
    write_state,
)
from flowlab.metrics import drift_curve, l2, masked_l2
from flowlab.msd import msd_edit
from flowlab.reinversion import EditConfig, recon_inv_edit, reinversion_edit
from flowlab.solver import euler_sample

DEFAULT_OUT_ROOT = "flowlab-runs"


@dataclass
class RunResult:
    out_dir: Path
    summary: dict
    lines: List[str] = dc_field(default_factory=list)


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj))


def config_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]


def default_out_dir(doc: dict) -> Path:
    root = Path(os.environ.get("FLOWLAB_OUT") or DEFAULT_OUT_ROOT)
    return root / f"{doc['command']}-seed{doc['seed']}-{config_digest(doc)}"


def metadata(doc: dict, grid=None) -> dict:
    meta = {
        "tool": "flowlab",
        "version": __version__,
        "command": doc["command"],
        "seed": doc["seed"],
        "generator": {"name": GENERATOR_NAME, "numpy": np.__version__},
        "config": doc,
        "field": doc.get("field"),
    }
    if grid is not None:
        meta["grid"] = grid.to_dict()
    return meta


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values).reshape(-1)]


def _preview(values, limit: int = 6) -> str:
    vals = _floats(values)
    shown = ", ".join(f"{v:.6g}" for v in vals[:limit])
    return f"[{shown}{', ...' if len(vals) > limit else ''}]"


def _prepare(out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


# ---------------------------------------------------------------- sample

def run_sample(doc: dict, out_dir: Path) -> RunResult:
    out = _prepare(out_dir)
    grid = build_grid(doc)
    field = build_field(doc["field"])
    start = build_state(doc["start"], "start", doc, field, grid).state
    cond = Condition.none()
    if doc["condition"] != "none":
        payload = build_state(doc[doc["condition"]], doc["condition"], doc, field, grid).state
        cond = Condition(doc["condition"], payload.values)
    before = field.eval_count
    traj = euler_sample(field, start, grid, cond)
    nfe = field.eval_count - before
    (out / "trajectory.csv").write_text(trajectory_csv(traj))
    (out / "velocities.csv").write_text(velocities_csv(traj))
    write_state(out / "terminal.flw", traj.final)
    if traj.final.shape is not None:
        write_pgm(out / "terminal.pgm", traj.final)
    summary = {"command": "sample", "nfe": nfe, "n": grid.n, "terminal": _floats(traj.final.values)}
    write_json(out / "summary.json", summary)
    write_json(out / "metadata.json", metadata(doc, grid))
    return RunResult(out, summary, [f"nfe={nfe}", f"terminal={_preview(traj.final.values)}"])


# ---------------------------------------------------------------- invert

def run_invert(doc: dict, out_dir: Path) -> RunResult:
    grid = build_grid(doc)
    field = build_field(doc["field"])
    method = doc["method"]
    if method == "ideal-affine" and not isinstance(field, AffineField):
        raise CapabilityError(f"ideal-affine inversion needs an affine field, got {field.kind!r}")
    built = build_state(doc["source"], "source", doc, field, grid)
    src = built.state
    cond = Condition.source(src.values) if doc["condition"] == "source" else Condition.none()
    out = _prepare(out_dir)

    forward = None
    true_noise = built.noise
    if method == "recon":
        report, forward = recon_invert(field, src, PriorSampler(doc["seed"]), grid, noise=built.noise)
        true_noise = forward.initial
    else:
        if method == "vanilla":
            report = vanilla_invert(field, src, grid, cond)
        else:
            report = ideal_invert_affine(field.spec, src, grid, cond)
        if true_noise is not None:
            forward = euler_sample(build_field(doc["field"]), true_noise, grid, built.condition)

    summary = {
        "command": "invert",
        "method": report.method,
        "nfe": report.nfe,
        "n": grid.n,
        "estimated_noise": _floats(report.estimated_noise.values),
    }
    summary.update({k: float(v) for k, v in report.metadata.items()})
    if true_noise is not None:
        summary["inversion_error"] = l2(report.estimated_noise.values, true_noise.values)
    if method == "recon":
        summary["reconstruction_error"] = l2(src.values, forward.final.values)
        summary["identity_gap"] = error_identity_gap(report, forward, src, true_noise)
    (out / "states.csv").write_text(inversion_csv(report))
    if forward is not None:
        (out / "drift.csv").write_text(curve_csv(drift_curve(report, forward), "drift"))
    write_state(out / "noise.flw", report.estimated_noise)
    write_json(out / "report.json", summary)
    write_json(out / "metadata.json", metadata(doc, grid))
    lines = [f"method={report.method} nfe={report.nfe}", f"estimated_noise={_preview(report.estimated_noise.values)}"]
    if "identity_gap" in summary:
        lines.append(f"identity_gap={summary['identity_gap']:.3e}")
    return RunResult(out, summary, lines)


# ---------------------------------------------------------------- edit

def _edit_config(doc: dict) -> EditConfig:
    return EditConfig(doc["t_tau"], doc["eta"], doc["deterministic_stage1"], doc["seed"])


def run_edit(doc: dict, out_dir: Path) -> RunResult:
    grid = build_grid(doc)
    field = build_field(doc["field"])
    src = build_state(doc["source"], "source", doc, field, grid).state
    ref = build_state(doc["reference"], "reference", doc, field, grid).state
    cfg = _edit_config(doc)
    mask = build_mask(doc["mask"], src.d, src.shape) if doc.get("mask") else None
    if doc["method"] == "recon-inv":
        if mask is not None:
            raise CapabilityError("masked editing is only available for the reinversion method")
        outcome = recon_inv_edit(field, src, ref, grid, cfg)
    elif mask is not None:
        outcome = msd_edit(field, src, ref, grid, cfg, mask)
    else:
        outcome = reinversion_edit(field, src, ref, grid, cfg)

    out = _prepare(out_dir)
    edited = outcome.edited
    write_state(out / "edited.flw", edited)
    if edited.shape is not None:
        write_pgm(out / "edited.pgm", edited)
    (out / "trajectory.csv").write_text(trajectory_csv(outcome.trajectory))
    (out / "velocities.csv").write_text(velocities_csv(outcome.trajectory))
    summary = outcome.summary(cfg)
    summary.update(
        command="edit",
        masked=mask is not None,
        transition_rule="smallest i with t_i >= t_tau",
        distance_to_source=l2(edited.values, src.values),
    )
    if mask is not None:
        summary["background_deviation"] = masked_l2(edited.values, src.values, 1.0 - mask.values)
        summary["foreground_change"] = masked_l2(edited.values, src.values, mask.values)
    write_json(out / "summary.json", summary)
    write_json(out / "metadata.json", metadata(doc, grid))
    lines = [
        f"method={summary['method']} nfe={outcome.nfe} tau={outcome.stage_boundary} seed={cfg.seed}",
        f"edited={_preview(edited.values)}",
    ]
    return RunResult(out, summary, lines)


# ---------------------------------------------------------------- bench

@dataclass(frozen=True)
class _BenchTask:
    run_id: str
    fn: Callable[[], dict]


def _shipped_fixtures(doc: dict):
    if "field" not in doc:
        return list(EDIT_FIXTURES)
    return [_ConfigFixture(doc)]


class _ConfigFixture:
    """Adapts a config's field/source/reference/mask to the fixture interface."""

    name = "config"

    def __init__(self, doc):
        self.doc = doc
        self.noise_seed = doc["seed"]

    def _grid(self):
        return build_grid(self.doc)

    def field(self):
        return build_field(self.doc["field"])

    def source(self):
        return build_state(self.doc["source"], "source", self.doc, self.field(), self._grid()).state

    def reference(self):
        return build_state(self.doc["reference"], "reference", self.doc, self.field(), self._grid()).state

    def mask(self):
        if not self.doc.get("mask"):
            return None
        src = self.source()
        return build_mask(self.doc["mask"], src.d, src.shape)


def _nfe_task(fx, n: int, t_tau: float, method: str, seed: int) -> dict:
    from flowlab.core import uniform_grid

    grid = uniform_grid(n)
    f = fx.field()
    det = method == "reinversion*"
    fn = recon_inv_edit if method == "recon-inv" else reinversion_edit
    out = fn(f, fx.source(), fx.reference(), grid, EditConfig(t_tau, 1.0, det, seed))
    return {"method": method, "n": n, "t_tau": t_tau, "tau": out.stage_boundary,
            "nfe": out.nfe, "field_evaluations": f.eval_count}


def _tau_task(fx, n: int, t_tau: float, det: bool) -> dict:
    from flowlab.core import uniform_grid

    src = fx.source()
    out = reinversion_edit(fx.field(), src, fx.reference(), uniform_grid(n),
                           EditConfig(t_tau, 1.0, det, fx.noise_seed))
    return {"fixture": fx.name, "t_tau": t_tau, "tau": out.stage_boundary, "deterministic_stage1": det,
            "nfe": out.nfe, "distance_to_source": l2(out.edited.values, src.values)}


def _eta_task(fx, n: int, t_tau: float, eta: float) -> dict:
    from flowlab.core import uniform_grid

    src = fx.source()
    mask = fx.mask()
    out = msd_edit(fx.field(), src, fx.reference(), uniform_grid(n),
                   EditConfig(t_tau, eta, False, fx.noise_seed), mask)
    return {"fixture": fx.name, "eta": eta, "nfe": out.nfe,
            "background_deviation": masked_l2(out.edited.values, src.values, 1.0 - mask.values),
            "foreground_change": masked_l2(out.edited.values, src.values, mask.values)}


def run_bench(doc: dict, out_dir: Path, workers: int = 1) -> RunResult:
    out = _prepare(out_dir)
    fixtures = _shipped_fixtures(doc)
    n = doc["steps"]
    t_tau = doc["t_tau"]
    tasks: List[_BenchTask] = []
    for steps in doc["steps_list"]:
        for method in ("recon-inv", "reinversion", "reinversion*"):
            tasks.append(_BenchTask(f"nfe-n{steps}-{method}",
                                    lambda s=steps, m=method: _nfe_task(fixtures[0], s, t_tau, m, doc["seed"])))
    for fx in fixtures:
        for tt in doc["t_tau_sweep"]:
            for det in (False, True):
                tasks.append(_BenchTask(f"tau-{fx.name}-{tt}-{'det' if det else 'model'}",
                                        lambda f=fx, t=tt, d=det: _tau_task(f, n, t, d)))
        if fx.mask() is not None:
            for eta in doc["eta_sweep"]:
                tasks.append(_BenchTask(f"eta-{fx.name}-{eta}", lambda f=fx, e=eta: _eta_task(f, n, t_tau, e)))

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        results = list(pool.map(lambda task: task.fn(), tasks))
    for task, res in zip(tasks, results):
        run_dir = _prepare(out / "runs" / task.run_id)
        write_json(run_dir / "summary.json", res)

    nfe_rows = [r for t, r in zip(tasks, results) if t.run_id.startswith("nfe-")]
    by_n: Dict[int, Dict[str, int]] = {}
    for r in nfe_rows:
        by_n.setdefault(r["n"], {})[r["method"]] = r["nfe"]
    (out / "nfe.csv").write_text(csv_text(
        ["method", "n", "t_tau", "tau", "nfe", "field_evaluations", "nfe_ratio_vs_recon_inv"],
        ([r["method"], r["n"], r["t_tau"], r["tau"], r["nfe"], r["field_evaluations"],
          by_n[r["n"]]["recon-inv"] / r["nfe"]] for r in nfe_rows),
    ))
    tau_rows = [r for t, r in zip(tasks, results) if t.run_id.startswith("tau-")]
    (out / "ablation_t_tau.csv").write_text(csv_text(
        ["fixture", "t_tau", "tau", "deterministic_stage1", "nfe", "distance_to_source"],
        ([r["fixture"], r["t_tau"], r["tau"], str(r["deterministic_stage1"]).lower(), r["nfe"],
          r["distance_to_source"]] for r in tau_rows),
    ))
    eta_rows = [r for t, r in zip(tasks, results) if t.run_id.startswith("eta-")]
    (out / "ablation_eta.csv").write_text(csv_text(
        ["fixture", "eta", "nfe", "background_deviation", "foreground_change"],
        ([r["fixture"], r["eta"], r["nfe"], r["background_deviation"], r["foreground_change"]] for r in eta_rows),
    ))
    speedups = {
        str(steps): {
            "recon-inv/reinversion": counts["recon-inv"] / counts["reinversion"],
            "reinversion/reinversion*": counts["reinversion"] / counts["reinversion*"],
        }
        for steps, counts in by_n.items()
    }
    summary = {"command": "bench", "runs": len(tasks), "nfe": {str(k): v for k, v in by_n.items()},
               "nfe_speedup": speedups}
    write_json(out / "summary.json", summary)
    write_json(out / "metadata.json", metadata(doc))
    lines = [f"n={k}: recon-inv {v['recon-inv']}, reinversion {v['reinversion']}, reinversion* {v['reinversion*']}"
             for k, v in by_n.items()]
    return RunResult(out, summary, lines)


RUNNERS = {"sample": run_sample, "invert": run_invert, "edit": run_edit}


def execute(command: str, doc: dict, overrides: Optional[dict] = None,
            out_dir: Optional[Path] = None, workers: int = 1) -> RunResult:
    """Resolve ``doc`` for ``command`` and run it, writing into ``out_dir`` (or the default root)."""
    raw_out = doc.get("out")
    resolved = resolve(doc, command, overrides)
    target = Path(out_dir) if out_dir else Path(raw_out) if raw_out else default_out_dir(resolved)
    if command == "bench":
        return run_bench(resolved, target, workers)
    return RUNNERS[command](resolved, target)
