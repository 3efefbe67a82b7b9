"""check | solve | euler | simulate | plot pipelines behind the CLI."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import click
import numpy as np
import pandas as pd

from core.artifacts import ArtifactWriter, read_table
from core.errors import AssumptionViolation, GridMismatch, MissingArtifact, _raise_error
from core.logging import log_stage
from core.metrics import track_stage
from regrowth import __version__
from regrowth.bellman import GriddedFunction, IncomeGrid, SolveReport, solve_value_function
from regrowth.config import RunConfig
from regrowth.euler import EulerProfile, envelope_check, euler_profile
from regrowth.markov import stationary_distribution
from regrowth.model import AssumptionReport, ModelSpec, baseline_spec, check_assumptions
from regrowth.plotting import ratio_figure, value_figure
from regrowth.schemas import (
    AssumptionReportSchema,
    DriftNodeSchema,
    DriftReportSchema,
    EulerRowSchema,
    HistogramRowSchema,
    PolicyRowSchema,
    RegimeRowSchema,
    SolveStepSchema,
    ValueRowSchema,
)
from regrowth.stationary import (
    DriftReport,
    EmpiricalDistribution,
    SimulationPath,
    drift_check,
    empirical_distribution,
    simulate_chain,
    total_variation,
)

logger = logging.getLogger(__name__)

__all__ = (
    "Solution",
    "SimulationOutcome",
    "cmd_check",
    "cmd_solve",
    "cmd_euler",
    "cmd_simulate",
    "cmd_plot",
    "load_solution",
    "load_or_solve",
)


@dataclass
class Solution:
    V: GriddedFunction
    policy: GriddedFunction
    report: Optional[SolveReport] = None


@dataclass
class SimulationOutcome:
    path: SimulationPath
    distribution: EmpiricalDistribution
    drift: DriftReport
    half_tv: float


def _writer(run: RunConfig) -> ArtifactWriter:
    return ArtifactWriter(run.out_dir, run.hash, run.seed, tool="regrowth", version=__version__)


def _wants(run: RunConfig, fmt: str) -> bool:
    return fmt in run.output.formats


def _value_rows(V: GriddedFunction) -> List[dict]:
    nodes = V.grid.nodes
    return [
        {"x": nodes[i], "regime": s, "V": V.values[i, s]}
        for s in range(V.n_states)
        for i in range(nodes.size)
    ]


def _policy_rows(policy: GriddedFunction) -> List[dict]:
    nodes = policy.grid.nodes
    rows = []
    for s in range(policy.n_states):
        for i, x in enumerate(nodes):
            phi = policy.values[i, s]
            rows.append({
                "x": x,
                "regime": s,
                "phi_star": phi,
                "invest_ratio": phi / x if x > 0 else np.nan,
                "c_star": x - phi,
            })
    return rows


def _solve_steps(report: SolveReport) -> List[dict]:
    deltas = report.sup_w_deltas
    return [
        {
            "iteration": k + 1,
            "delta_w": delta,
            "ratio": delta / deltas[k - 1] if k > 0 and deltas[k - 1] > 0 else np.nan,
            "converged": report.converged and k + 1 == report.iterations,
        }
        for k, delta in enumerate(deltas)
    ]


def _field_from_frame(frame: pd.DataFrame, column: str, grid: IncomeGrid, n_states: int, kind: str) -> GriddedFunction:
    table = frame.pivot(index="x", columns="regime", values=column).sort_index()
    if table.shape[1] != n_states or not np.array_equal(table.index.to_numpy(dtype=np.float64), grid.nodes):
        _raise_error(GridMismatch, custom_error=f"stored {column} does not match the configured grid and regimes")
    return GriddedFunction(grid, table.to_numpy(dtype=np.float64), kind=kind)


def _solve(run: RunConfig, spec: ModelSpec) -> Solution:
    numerics = run.numerics
    V, policy, report = solve_value_function(
        spec,
        run.grid(),
        numerics.y_count,
        run.rule(),
        run.stop(),
        refine=numerics.refine,
        concave_projection=numerics.concave_projection,
    )
    return Solution(V, policy, report)


def _echo_frame(frame: pd.DataFrame) -> None:
    click.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.6g}"))


@track_stage("check")
@log_stage("check")
def cmd_check(run: RunConfig) -> AssumptionReport:
    spec = run.build_model()
    report = check_assumptions(spec)

    if _wants(run, "csv"):
        with _writer(run) as writer:
            writer.write_table("check.csv", AssumptionReportSchema.frame([report]))

    rows = AssumptionReportSchema.serialize_one(report)
    click.echo(pd.Series(rows).to_string())

    violations = report.violations()
    if violations:
        _raise_error(AssumptionViolation, error_details=violations)
    return report


@track_stage("solve")
@log_stage("solve")
def cmd_solve(run: RunConfig, force: bool = False) -> Tuple[Solution, Optional[Solution]]:
    spec = run.build_model()
    violations = check_assumptions(spec).violations()
    if violations:
        if not force:
            _raise_error(AssumptionViolation, error_details=violations)
        logger.warning("Solving despite violated assumptions (--force)", extra={"violations": sorted(violations)})

    solution = _solve(run, spec)
    baseline = None
    if run.output.baseline:
        baseline = _solve(run, baseline_spec(spec, run.baseline_regime(spec)))

    if _wants(run, "csv"):
        with _writer(run) as writer:
            writer.write_table("value.csv", ValueRowSchema.frame(_value_rows(solution.V)))
            writer.write_table("policy.csv", PolicyRowSchema.frame(_policy_rows(solution.policy)))
            writer.write_table("report.csv", SolveStepSchema.frame(_solve_steps(solution.report)))
            if baseline is not None:
                writer.write_table("baseline_value.csv", ValueRowSchema.frame(_value_rows(baseline.V)))
                writer.write_table("baseline_policy.csv", PolicyRowSchema.frame(_policy_rows(baseline.policy)))

    report = solution.report
    click.echo(
        f"sweeps={report.iterations} converged={str(report.converged).lower()} "
        f"delta_w={report.sup_w_deltas[-1]:.6g}"
    )
    return solution, baseline


def load_solution(run: RunConfig, spec: ModelSpec) -> Solution:
    grid = run.grid()
    values = read_table(run.out_dir / "value.csv", expected_hash=run.hash)
    policy = read_table(run.out_dir / "policy.csv", expected_hash=run.hash)
    return Solution(
        _field_from_frame(values, "V", grid, spec.n_states, "value"),
        _field_from_frame(policy, "phi_star", grid, spec.n_states, "policy"),
    )


def load_or_solve(run: RunConfig, spec: ModelSpec) -> Solution:
    try:
        return load_solution(run, spec)
    except MissingArtifact as e:
        logger.info(f"Solving in-run: {e}")
        return _solve(run, spec)


@track_stage("euler")
@log_stage("euler")
def cmd_euler(run: RunConfig) -> EulerProfile:
    spec = run.build_model()
    solution = load_or_solve(run, spec)
    numerics = run.numerics

    profile = euler_profile(solution.V, solution.policy, spec, run.rule(), y_count=numerics.y_count)
    envelope = envelope_check(solution.V, solution.policy, spec, run.grid())

    if _wants(run, "csv"):
        with _writer(run) as writer:
            writer.write_table("residuals.csv", EulerRowSchema.frame(profile.rows))

    quantiles = profile.quantiles()
    click.echo("relative residual quantiles")
    click.echo(pd.Series({f"q{int(level * 100)}": value for level, value in quantiles.items()}).to_string())
    click.echo("envelope deviation per regime: " + " ".join(f"{d:.4g}" for d in envelope))
    return profile


@track_stage("simulate")
@log_stage("simulate")
def cmd_simulate(run: RunConfig) -> SimulationOutcome:
    spec = run.build_model()
    solution = load_or_solve(run, spec)
    simulation = run.simulation
    config = run.simulation_config(spec.n_states)

    path = simulate_chain(solution.policy, spec, config)
    distribution = empirical_distribution(path, config.burn_in, simulation.n_bins, n_states=spec.n_states)
    drift = drift_check(solution.V, solution.policy, spec, run.grid(), run.rule(), y_count=run.numerics.y_count)

    half_tv = float("nan")
    if config.horizon - config.burn_in >= 2:
        middle = config.burn_in + (config.horizon - config.burn_in) // 2
        edges = distribution.bin_edges
        first = empirical_distribution(path.window(0, middle), config.burn_in, simulation.n_bins, spec.n_states, edges)
        second = empirical_distribution(path.window(middle), 0, simulation.n_bins, spec.n_states, edges)
        half_tv = total_variation(first, second)

    stationary = stationary_distribution(spec.chain) if spec.chain.irreducible else np.full(spec.n_states, np.nan)
    edges = distribution.bin_edges
    histogram = [
        {
            "regime": s,
            "bin_left": edges[b],
            "bin_right": edges[b + 1],
            "count": int(distribution.counts[s, b]),
            "frequency": distribution.histograms[s, b],
        }
        for s in range(spec.n_states)
        for b in range(edges.size - 1)
    ]
    regimes = [
        {"regime": s, "frequency": distribution.regime_marginals[s], "stationary": stationary[s]}
        for s in range(spec.n_states)
    ]

    if _wants(run, "csv"):
        with _writer(run) as writer:
            if simulation.write_path:
                writer.write_table("path.csv", pd.DataFrame({
                    "t": np.arange(len(path)),
                    "x": path.incomes,
                    "regime": path.regimes + 1,
                }))
            writer.write_table("histogram.csv", HistogramRowSchema.frame(histogram))
            writer.write_table("regimes.csv", RegimeRowSchema.frame(regimes))
            writer.write_table("drift.csv", DriftReportSchema.frame([drift]))
            writer.write_table("drift_nodes.csv", DriftNodeSchema.frame(drift.nodes))

    _echo_frame(RegimeRowSchema.frame(regimes))
    click.echo(
        f"drift lambda={drift.lambda_hat:.2f} kappa={drift.kappa_hat:.6g} "
        f"satisfied={str(drift.satisfied).lower()} two-half tv={half_tv:.4f}"
    )
    return SimulationOutcome(path, distribution, drift, half_tv)


@track_stage("plot")
@log_stage("plot")
def cmd_plot(run: RunConfig) -> List[str]:
    if not _wants(run, "svg"):
        logger.warning("svg not among output.formats; nothing to plot")
        return []

    values = read_table(run.out_dir / "value.csv", expected_hash=run.hash)
    policy = read_table(run.out_dir / "policy.csv", expected_hash=run.hash)
    baseline_values = baseline_policy = None
    if run.output.baseline:
        baseline_values = read_table(run.out_dir / "baseline_value.csv", expected_hash=run.hash)
        baseline_policy = read_table(run.out_dir / "baseline_policy.csv", expected_hash=run.hash)

    with _writer(run) as writer:
        written = [
            writer.write_svg("value.svg", value_figure(values, baseline_values)),
            writer.write_svg("invest_ratio.svg", ratio_figure(policy, baseline_policy)),
        ]
    for target in written:
        click.echo(str(target))
    return [str(target) for target in written]
