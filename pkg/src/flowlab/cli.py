"""``flowlab`` command-line interface.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical divergence, 4 unsupported capability, 5 degenerate stage split.
"""

from __future__ import annotations

import functools
import sys
from typing import Optional

import click

from flowlab.config import load_document
from flowlab.errors import ConfigError, FlowlabError
from flowlab.runner import execute
from flowlab.verify import SUITES, failed_suites, run_suite


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FlowlabError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _document(config: Optional[str]) -> dict:
    return load_document(config) if config else {}


def _run(command: str, config, out, workers: int = 1, **overrides):
    doc = _document(config)
    result = execute(command, doc, overrides, out_dir=out, workers=workers)
    for line in result.lines:
        click.echo(line)
    click.echo(f"out={result.out_dir}")


config_opt = click.option("--config", type=click.Path(dir_okay=False), help="TOML config or a run's metadata.json.")
out_opt = click.option("--out", type=click.Path(file_okay=False), help="Output directory (default: $FLOWLAB_OUT/<run id>).")
seed_opt = click.option("--seed", type=int, help="Seed for the prior generator.")
steps_opt = click.option("--steps", type=int, help="Number of uniform Euler steps.")
field_opt = click.option("--field", "field_name", help="Velocity field name (zero, constant, identity, affine, smooth-random).")


def _edit_options(fn):
    for opt in reversed(
        [
            config_opt,
            steps_opt,
            click.option("--t-tau", type=float, help="Stage transition time in (0, 1)."),
            click.option("--eta", type=float, help="Source-velocity weight for masked editing."),
            seed_opt,
            field_opt,
            click.option("--mask", type=click.Path(dir_okay=False), help="Mask file (v1 or P5 PGM)."),
            click.option("--deterministic-stage1", is_flag=True, default=None,
                         help="Use the source-targeting velocity in stage 1."),
            out_opt,
        ]
    ):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="flowlab")
def cli():
    """Rectified-flow sampling, inversion and two-stage editing on small latents."""


@cli.command()
@config_opt
@steps_opt
@seed_opt
@field_opt
@out_opt
@_guard
def sample(config, steps, seed, field_name, out):
    """Integrate the field forward from a start state."""
    _run("sample", config, out, steps=steps, seed=seed, field=field_name)


@cli.command()
@config_opt
@click.option("--method", type=click.Choice(["vanilla", "ideal-affine", "recon"]))
@steps_opt
@seed_opt
@field_opt
@out_opt
@_guard
def invert(config, method, steps, seed, field_name, out):
    """Recover the starting noise of a source state."""
    _run("invert", config, out, method=method, steps=steps, seed=seed, field=field_name)


@cli.command()
@click.option("--method", type=click.Choice(["reinversion", "recon-inv"]))
@_edit_options
@_guard
def edit(method, config, steps, t_tau, eta, seed, field_name, mask, deterministic_stage1, out):
    """Two-stage edit of a source toward a reference."""
    _run("edit", config, out, method=method, steps=steps, t_tau=t_tau, eta=eta, seed=seed,
         field=field_name, mask=mask, deterministic_stage1=deterministic_stage1)


@cli.command()
@_edit_options
@_guard
def reinvert(config, steps, t_tau, eta, seed, field_name, mask, deterministic_stage1, out):
    """Shorthand for ``edit --method reinversion``."""
    _run("edit", config, out, method="reinversion", steps=steps, t_tau=t_tau, eta=eta, seed=seed,
         field=field_name, mask=mask, deterministic_stage1=deterministic_stage1)


@cli.command()
@click.argument("suite")
def verify(suite):
    """Run a built-in property suite (or ``all``)."""
    if suite != "all" and suite not in SUITES:
        click.echo(f"error: unknown suite {suite!r}; choose from all, {', '.join(SUITES)}", err=True)
        sys.exit(ConfigError.exit_code)
    checks = run_suite(suite)
    for c in checks:
        click.echo(c.line())
    failed = failed_suites(checks)
    if failed:
        click.echo(f"FAILED suites: {', '.join(failed)}")
        sys.exit(1)
    click.echo(f"all {len(checks)} checks passed")


@cli.command()
@config_opt
@steps_opt
@click.option("--t-tau", type=float)
@seed_opt
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel worker threads.")
@out_opt
@_guard
def bench(config, steps, t_tau, seed, workers, out):
    """NFE table plus t_tau and eta sweeps as plot-ready CSV."""
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    _run("bench", config, out, workers=workers, steps=steps, t_tau=t_tau, seed=seed)


def main(argv=None):
    cli.main(args=argv, prog_name="flowlab")


if __name__ == "__main__":
    main()
