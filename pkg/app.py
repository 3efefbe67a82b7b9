import logging
import sys
from typing import Callable, Optional

import click

from core.errors import RegrowthError
from core.logging import setup_logging
from core.metrics import write_metrics
from core.settings import settings
from regrowth import __version__
from regrowth.config import load_run_config
from regrowth.pipelines import cmd_check, cmd_euler, cmd_plot, cmd_simulate, cmd_solve

logger = logging.getLogger(__name__)


def _run(ctx: click.Context, command: Callable, **kwargs) -> None:
    """Load the run config, execute one pipeline and map errors to exit codes."""
    options = ctx.obj
    try:
        run = load_run_config(options["config"], seed=options["seed"], out=options["out"])
        command(run, **kwargs)
    except RegrowthError as e:
        click.echo(f"error: {type(e).__name__}: {e.default_msg}", err=True)
        for line in e.itemize():
            click.echo(f"  - {line}", err=True)
        ctx.exit(e.exit_code)
    finally:
        write_metrics(options["metrics"])


@click.group()
@click.version_option(__version__, prog_name="regrowth")
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
              help="Run configuration (YAML). Defaults to DEFAULT_CONFIG.")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None,
              help="Output directory; overrides output.directory.")
@click.option("--seed", "seed", type=click.IntRange(min=0), default=None,
              help="Simulation seed; overrides simulation.seed.")
@click.option("--metrics", "metrics", type=click.Path(dir_okay=False), default=None,
              help="Write Prometheus textfile metrics here.")
@click.option("--log-level", "log_level", default=None, help="Overrides LOG_LEVEL.")
@click.option("--log-json/--no-log-json", "log_json", default=None, help="JSON log records on stderr.")
@click.pass_context
def cli(
    ctx: click.Context,
    config: Optional[str],
    out: Optional[str],
    seed: Optional[int],
    metrics: Optional[str],
    log_level: Optional[str],
    log_json: Optional[bool],
) -> None:
    """Risk-sensitive regime-switching optimal growth solver."""
    setup_logging(level=log_level, json_format=log_json)
    ctx.obj = {
        "config": config,
        "out": out,
        "seed": seed,
        "metrics": metrics or settings.METRICS_FILE or None,
    }


@cli.command()
@click.pass_context
def check(ctx: click.Context) -> None:
    """Report the contraction and drift constants of the model."""
    _run(ctx, cmd_check)


@cli.command()
@click.option("--force", is_flag=True, help="Solve even if the assumptions fail.")
@click.pass_context
def solve(ctx: click.Context, force: bool) -> None:
    """Value iteration; writes value.csv, policy.csv and report.csv."""
    _run(ctx, cmd_solve, force=force)


@cli.command()
@click.pass_context
def euler(ctx: click.Context) -> None:
    """Euler-equation residuals of the solved policy."""
    _run(ctx, cmd_euler)


@cli.command()
@click.pass_context
def simulate(ctx: click.Context) -> None:
    """Simulate the controlled chain and test the drift condition."""
    _run(ctx, cmd_simulate)


@cli.command()
@click.pass_context
def plot(ctx: click.Context) -> None:
    """SVG figures of V and the investment ratio from the solve artifacts."""
    _run(ctx, cmd_plot)


def main():
    """Run the command line interface."""
    cli(prog_name="regrowth")


if __name__ == "__main__":
    sys.exit(main())
