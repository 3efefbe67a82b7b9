"""Cobb-Douglas regime-switching production with power utility.

Primitives (vectorized over numpy arrays):

    f(theta, y, z) = y ** omega[theta] * z
    u(a)           = a ** sigma
    w(x, theta)    = (r + x) ** sigma
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from core.errors import ConfigError, DomainError, InfiniteMoment, _raise_error
from regrowth.markov import RegimeChain, validate_chain
from regrowth.shock import ShockModel

logger = logging.getLogger(__name__)

__all__ = (
    "ModelSpec",
    "AssumptionReport",
    "production",
    "production_derivative",
    "utility",
    "utility_derivative",
    "weight",
    "check_assumptions",
    "minimal_weight_offset",
    "baseline_spec",
)

Real = Union[float, NDArray[np.float64]]


@dataclass(frozen=True)
class ModelSpec:
    beta: float
    gamma: float
    sigma: float
    r: float
    omega: NDArray[np.float64]
    chain: RegimeChain
    shock: ShockModel

    def __post_init__(self):
        omega = np.array(self.omega, dtype=np.float64).ravel()
        omega.flags.writeable = False
        object.__setattr__(self, "omega", omega)

        errors = {}
        if not 0 < self.beta < 1:
            errors["model.beta"] = ["must lie in (0, 1)"]
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            errors["model.gamma"] = ["must be a finite real >= 0"]
        if not 0 < self.sigma < 1:
            errors["model.sigma"] = ["must lie in (0, 1)"]
        if not (self.r >= 1 and math.isfinite(self.r)):
            errors["model.r"] = ["must be a finite real >= 1"]
        if omega.size != self.chain.n_states:
            errors["model.omega"] = [f"needs one entry per regime ({self.chain.n_states}), got {omega.size}"]
        elif np.any((omega <= 0) | (omega >= 1)):
            errors["model.omega"] = ["every entry must lie in (0, 1)"]
        if errors:
            _raise_error(ConfigError, error_details=errors)

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            (self.beta, self.gamma, self.sigma, self.r, self.chain, self.shock)
            == (other.beta, other.gamma, other.sigma, other.r, other.chain, other.shock)
            and np.array_equal(self.omega, other.omega)
        )

    def __hash__(self) -> int:
        return hash((self.beta, self.gamma, self.sigma, self.r, self.omega.tobytes(), self.chain, self.shock))


@dataclass(frozen=True)
class AssumptionReport:
    d: float
    x_bar: float
    alpha: float
    alpha_beta: float
    d1_value: float
    lambda2: float
    kappa2: float
    d3_irreducible: bool
    z_bar: float
    reciprocal_mean: float
    minimal_r: int

    @property
    def f2_satisfied(self) -> bool:
        return self.alpha_beta < 1

    @property
    def d1_satisfied(self) -> bool:
        return math.isfinite(self.d1_value)

    @property
    def d2_satisfied(self) -> bool:
        return 0 < self.lambda2 < 1 and math.isfinite(self.kappa2)

    def violations(self) -> dict:
        # an infinite E[1/xi] never reaches a report: check_assumptions raises InfiniteMoment
        problems = {}
        if not self.f2_satisfied:
            problems["F2"] = [
                f"alpha*beta = {self.alpha_beta:.6g} >= 1; smallest integer r restoring it is {self.minimal_r}"
            ]
        if not self.d2_satisfied:
            problems["D2"] = [f"lambda2 = {self.lambda2:.6g} outside (0, 1)"]
        return problems


def production(spec: ModelSpec, theta: Union[int, ArrayLike], y: Real, z: Real) -> Real:
    omega = spec.omega[theta]
    return np.power(y, omega) * z


def production_derivative(spec: ModelSpec, theta: Union[int, ArrayLike], y: Real, z: Real) -> Real:
    if np.any(np.asarray(y) <= 0):
        _raise_error(DomainError, custom_error="marginal product is unbounded at y = 0")
    omega = spec.omega[theta]
    return omega * np.power(y, omega - 1.0) * z


def utility(spec: ModelSpec, a: Real) -> Real:
    return np.power(a, spec.sigma)


def utility_derivative(spec: ModelSpec, a: Real) -> Real:
    if np.any(np.asarray(a) <= 0):
        _raise_error(DomainError, custom_error="marginal utility is unbounded at a = 0")
    return spec.sigma * np.power(a, spec.sigma - 1.0)


def weight(spec: ModelSpec, x: Real, theta: Union[int, ArrayLike] = 0) -> Real:
    # the weight does not depend on the regime for this family
    return np.power(spec.r + np.asarray(x, dtype=np.float64), spec.sigma)


def _threshold_income(spec: ModelSpec, z_bar: float) -> float:
    return float(np.max(np.power(z_bar, 1.0 / (1.0 - spec.omega))))


def minimal_weight_offset(spec: ModelSpec) -> int:
    """Smallest integer r >= 1 with beta * (1 + x_bar / r) ** sigma < 1."""
    x_bar = _threshold_income(spec, spec.shock.mean)
    slack = (1.0 / spec.beta) ** (1.0 / spec.sigma) - 1.0
    r = max(1, math.floor(x_bar / slack) + 1)
    while r > 1 and spec.beta * (1 + x_bar / (r - 1)) ** spec.sigma < 1:
        r -= 1
    while spec.beta * (1 + x_bar / r) ** spec.sigma >= 1:
        r += 1
    return r


def check_assumptions(spec: ModelSpec) -> AssumptionReport:
    z_bar = spec.shock.mean
    reciprocal_mean = spec.shock.reciprocal_mean
    if not math.isfinite(z_bar):
        _raise_error(InfiniteMoment, custom_error="shock mean is infinite")
    if not math.isfinite(reciprocal_mean):
        _raise_error(InfiniteMoment, custom_error="mean of 1/xi is infinite")

    x_bar = _threshold_income(spec, z_bar)
    alpha = (1.0 + x_bar / spec.r) ** spec.sigma
    omega = spec.omega
    kappa2 = float(np.max(
        z_bar * (1.0 - omega) * np.power((1.0 + z_bar) * omega, omega / (1.0 - omega))
    ))

    report = AssumptionReport(
        d=1.0,
        x_bar=x_bar,
        alpha=alpha,
        alpha_beta=alpha * spec.beta,
        d1_value=float(np.max(reciprocal_mean / (spec.beta * omega))),
        lambda2=z_bar / (1.0 + z_bar),
        kappa2=kappa2,
        d3_irreducible=spec.chain.irreducible,
        z_bar=z_bar,
        reciprocal_mean=reciprocal_mean,
        minimal_r=minimal_weight_offset(spec),
    )
    logger.debug("Assumption constants computed", extra={"alpha_beta": report.alpha_beta, "x_bar": x_bar})
    return report


def baseline_spec(spec: ModelSpec, regime: int) -> ModelSpec:
    """Single-regime model frozen in ``regime`` (0-based)."""
    return replace(
        spec,
        omega=np.array([spec.omega[regime]]),
        chain=validate_chain([[1.0]]),
    )
