"""Euler-equation and envelope checks of a solved model.

The right side of the Euler equation is an expectation under the measure
obtained by tilting the (quadrature node, next regime) weights with
exp(-gamma * V) at next-period income and renormalizing.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from core.errors import BoundaryPolicy, DegenerateMass, RegrowthError, _raise_error
from regrowth.bellman import GriddedFunction, IncomeGrid
from regrowth.model import ModelSpec, production, production_derivative, utility_derivative
from regrowth.shock import QuadratureRule

logger = logging.getLogger(__name__)

__all__ = (
    "DistortedWeights",
    "EulerRow",
    "EulerProfile",
    "distorted_measure",
    "euler_sides",
    "euler_residual",
    "classical_euler_residual",
    "euler_profile",
    "envelope_check",
    "near_boundary",
)


@dataclass(frozen=True)
class DistortedWeights:
    """``weights[i, s]``: mass of quadrature node i and next regime s."""

    weights: NDArray[np.float64]
    z: NDArray[np.float64]
    y: float


@dataclass(frozen=True)
class EulerRow:
    x: float
    regime: int
    residual: float
    relative_residual: float
    excluded: bool


@dataclass
class EulerProfile:
    rows: List[EulerRow] = field(default_factory=list)

    def relative_residuals(self, regime: Optional[int] = None) -> NDArray[np.float64]:
        return np.array([
            row.relative_residual for row in self.rows
            if not row.excluded and (regime is None or row.regime == regime)
        ])

    def quantiles(self, levels=(0.0, 0.25, 0.5, 0.75, 0.9, 1.0)) -> dict:
        values = self.relative_residuals()
        if values.size == 0:
            return {level: float("nan") for level in levels}
        return {level: float(np.quantile(values, level)) for level in levels}


def _policy_at(policy: GriddedFunction, x: float, theta: int) -> float:
    return float(policy.evaluate(x, theta))


def distorted_measure(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    x: float,
    theta: int,
    rule: QuadratureRule,
) -> DistortedWeights:
    y = _policy_at(policy, x, theta)
    z, q = rule.probabilities(spec.shock)
    base = q[:, None] * spec.chain.row(theta)[None, :]

    if spec.gamma == 0:
        return DistortedWeights(base / base.sum(), z, y)

    incomes = production(spec, theta, y, z)
    scaled = spec.gamma * np.column_stack([V.evaluate(incomes, nxt) for nxt in range(spec.n_states)])
    shift = scaled[base > 0].min()
    raw = base * np.exp(-(scaled - shift))
    mass = raw.sum()
    if not (mass > 0 and np.isfinite(mass)):
        _raise_error(DegenerateMass)
    return DistortedWeights(raw / mass, z, y)


def euler_sides(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    x: float,
    theta: int,
    rule: QuadratureRule,
    distorted: bool = True,
) -> Tuple[float, float]:
    """(u'(c*), beta * E'[u'(c*') f']) at income ``x`` in regime ``theta``."""
    y = _policy_at(policy, x, theta)
    if not 0 < y < x:
        _raise_error(BoundaryPolicy, custom_error=f"policy {y:.6g} at x={x:.6g} is not interior")

    if distorted:
        measure = distorted_measure(V, policy, spec, x, theta, rule)
        weights, z = measure.weights, measure.z
    else:
        z, q = rule.probabilities(spec.shock)
        weights = q[:, None] * spec.chain.row(theta)[None, :]
        weights = weights / weights.sum()

    lhs = float(utility_derivative(spec, x - y))

    # a zero shock contributes nothing: f' vanishes there
    active = z > 0
    z, weights = z[active], weights[active]
    incomes = production(spec, theta, y, z)[:, None]
    regimes = np.arange(spec.n_states)[None, :]
    consumption = incomes - policy.evaluate(np.broadcast_to(incomes, weights.shape), np.broadcast_to(regimes, weights.shape))
    if np.any(consumption[weights > 0] <= 0):
        _raise_error(BoundaryPolicy, custom_error="next-period consumption vanishes")

    marginal_utility = np.zeros_like(consumption)
    positive = consumption > 0
    marginal_utility[positive] = utility_derivative(spec, consumption[positive])
    marginal_product = production_derivative(spec, theta, y, z)[:, None]

    rhs = spec.beta * float(np.sum(weights * marginal_utility * marginal_product))
    return lhs, rhs


def euler_residual(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    x: float,
    theta: int,
    rule: QuadratureRule,
) -> float:
    lhs, rhs = euler_sides(V, policy, spec, x, theta, rule)
    return lhs - rhs


def classical_euler_residual(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    x: float,
    theta: int,
    rule: QuadratureRule,
) -> float:
    lhs, rhs = euler_sides(V, policy, spec, x, theta, rule, distorted=False)
    return lhs - rhs


def near_boundary(x: float, y: float, y_count: Optional[int]) -> bool:
    """Policy within one y-grid step of 0 or x (exact boundary only without ``y_count``)."""
    if y_count is None:
        return y <= 0 or y >= x
    step = x / (y_count - 1) * (1 + 1e-9)
    return y <= step or y >= x - step


def euler_profile(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    rule: QuadratureRule,
    y_count: Optional[int] = None,
) -> EulerProfile:
    profile = EulerProfile()
    nodes = V.grid.nodes

    for theta in range(spec.n_states):
        for i in range(1, nodes.size):
            x = float(nodes[i])
            y = float(policy.values[i, theta])
            excluded = near_boundary(x, y, y_count)
            residual = relative = float("nan")
            try:
                lhs, rhs = euler_sides(V, policy, spec, x, theta, rule)
                residual = lhs - rhs
                relative = abs(residual) / lhs
            except BoundaryPolicy:
                excluded = True
            profile.rows.append(EulerRow(x, theta, residual, relative, excluded))

    kept = profile.relative_residuals()
    logger.info(
        f"Euler residuals at {kept.size} interior nodes, median relative {np.median(kept) if kept.size else float('nan'):.3e}",
        extra={"nodes": int(kept.size)},
    )
    return profile


def envelope_check(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    grid: IncomeGrid,
    x_floor: float = 0.0,
) -> NDArray[np.float64]:
    """Per-regime max relative gap between the centered slope of V and u'(c*)."""
    nodes = grid.nodes
    deviations = np.zeros(spec.n_states)

    for theta in range(spec.n_states):
        values = V.column(theta)
        consumption = nodes - policy.column(theta)
        worst = 0.0
        for i in range(1, nodes.size - 1):
            if nodes[i] < x_floor or consumption[i] <= 0:
                continue
            slope = (values[i + 1] - values[i - 1]) / (nodes[i + 1] - nodes[i - 1])
            try:
                marginal = float(utility_derivative(spec, consumption[i]))
            except RegrowthError:
                continue
            worst = max(worst, abs(slope - marginal) / marginal)
        deviations[theta] = worst

    return deviations
