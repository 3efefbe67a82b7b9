"""Shock distribution, inverse-CDF quadrature and the entropic certainty equivalent."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from core.errors import (
    ConfigError,
    DomainError,
    NonFiniteIntegrand,
    NumericUnderflow,
    _raise_error,
)

logger = logging.getLogger(__name__)

__all__ = (
    "ShockModel",
    "QuadratureRule",
    "inverse_cdf",
    "expect_shock",
    "entropic_aggregate",
    "certainty_equivalent",
)

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ShockModel:
    """Law of the i.i.d. multiplicative shock.

    ``kind`` is ``"lognormal"`` (``mu``, ``sigma_z`` of the underlying normal)
    or ``"discrete"`` (sorted ``points`` with probability ``weights``).
    """

    kind: str
    mu: float = 0.0
    sigma_z: float = 1.0
    points: Tuple[float, ...] = field(default_factory=tuple)
    weights: Tuple[float, ...] = field(default_factory=tuple)

    @classmethod
    def lognormal(cls, mu: float = 0.0, sigma_z: float = 1.0) -> "ShockModel":
        if not (sigma_z > 0 and math.isfinite(sigma_z) and math.isfinite(mu)):
            _raise_error(ConfigError, error_details={"model.shock.sigma_z": ["must be a positive finite real"]})
        return cls(kind="lognormal", mu=float(mu), sigma_z=float(sigma_z))

    @classmethod
    def discrete(cls, points: Sequence[float], weights: Sequence[float]) -> "ShockModel":
        z = np.asarray(points, dtype=np.float64)
        w = np.asarray(weights, dtype=np.float64)
        errors = {}
        if z.ndim != 1 or z.size == 0 or z.shape != w.shape:
            errors["model.shock.points"] = ["points and weights must be non-empty lists of equal length"]
        elif np.any(z < 0) or not np.all(np.isfinite(z)):
            errors["model.shock.points"] = ["points must be finite and non-negative"]
        elif np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            errors["model.shock.weights"] = [f"weights must be a probability vector (sum {w.sum():.15g})"]
        if errors:
            _raise_error(ConfigError, error_details=errors)

        order = np.argsort(z, kind="stable")
        z, w = z[order], w[order] / w.sum()
        return cls(kind="discrete", points=tuple(z.tolist()), weights=tuple(w.tolist()))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def mean(self) -> float:
        if self.is_discrete:
            return float(np.dot(self.points, self.weights))
        return math.exp(self.mu + self.sigma_z ** 2 / 2)

    @property
    def reciprocal_mean(self) -> float:
        if self.is_discrete:
            z = np.asarray(self.points)
            w = np.asarray(self.weights)
            if np.any((z == 0) & (w > 0)):
                return math.inf
            positive = w > 0
            return float(np.dot(w[positive], 1.0 / z[positive]))
        return math.exp(-self.mu + self.sigma_z ** 2 / 2)

    def distribution(self):
        return stats.lognorm(s=self.sigma_z, scale=math.exp(self.mu))

    def cdf(self, z: ArrayLike) -> NDArray[np.float64]:
        z = np.asarray(z, dtype=np.float64)
        if self.is_discrete:
            cum = np.cumsum(self.weights)
            idx = np.searchsorted(self.points, z, side="right")
            return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return self.distribution().cdf(z)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite trapezoid over quantile levels clamped to [epsilon, 1 - epsilon]."""

    n_intervals: int = 18
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.n_intervals < 1:
            _raise_error(DomainError, custom_error="n_intervals must be at least 1")
        if not 0 < self.epsilon < 1 / (2 * self.n_intervals):
            _raise_error(DomainError, custom_error="epsilon must lie in (0, 1/(2*n_intervals))")

    def levels(self) -> NDArray[np.float64]:
        return np.linspace(self.epsilon, 1.0 - self.epsilon, self.n_intervals + 1)

    def nodes(self, shock: ShockModel) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Shock values and raw quadrature weights (mass 1 - 2*epsilon if continuous)."""
        if shock.is_discrete:
            return np.asarray(shock.points), np.asarray(shock.weights)

        t = self.levels()
        h = (1.0 - 2.0 * self.epsilon) / self.n_intervals
        weights = np.full(t.size, h)
        weights[0] = weights[-1] = h / 2
        return inverse_cdf(shock, t), weights

    def probabilities(self, shock: ShockModel) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Shock values and weights renormalized to unit mass."""
        z, weights = self.nodes(shock)
        return z, weights / weights.sum()


def inverse_cdf(shock: ShockModel, t: Union[float, ArrayLike]) -> Union[float, NDArray[np.float64]]:
    scalar = np.ndim(t) == 0
    levels = np.asarray(t, dtype=np.float64)
    if np.any(~((levels > 0) & (levels < 1))):
        _raise_error(DomainError, custom_error="quantile level must lie in (0, 1)")

    if shock.is_discrete:
        cum = np.cumsum(shock.weights)
        idx = np.searchsorted(cum, levels, side="left")
        values = np.asarray(shock.points)[np.minimum(idx, len(shock.points) - 1)]
    else:
        values = shock.distribution().ppf(levels)

    return float(values) if scalar else values


def expect_shock(
    g: Callable[[NDArray[np.float64]], ArrayLike],
    shock: ShockModel,
    rule: QuadratureRule,
) -> float:
    """E[g(xi)] by quadrature; ``g`` is called once with the array of nodes."""
    z, weights = rule.nodes(shock)
    values = np.broadcast_to(np.asarray(g(z), dtype=np.float64), z.shape)
    if not np.all(np.isfinite(values)):
        _raise_error(NonFiniteIntegrand)
    return float(np.dot(weights, values))


def entropic_aggregate(
    values: ArrayLike,
    weights: NDArray[np.float64],
    gamma: float,
) -> NDArray[np.float64]:
    """Entropic certainty equivalent along the last axis of ``values``.

    ``weights`` are the joint outcome probabilities (last axis). Zero-weight
    outcomes are ignored. The result is clipped into [min, max] of the kept
    outcomes, so constant outcomes come back exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        _raise_error(NonFiniteIntegrand)

    positive = weights > 0
    v = values[..., positive]
    q = weights[positive]
    mass = np.sum(np.broadcast_to(q, v.shape), axis=-1)

    lo, hi = v.min(axis=-1), v.max(axis=-1)

    if gamma == 0:
        return np.clip(np.sum(v * q, axis=-1) / mass, lo, hi)

    scaled = gamma * v
    shift = scaled.min(axis=-1, keepdims=True)
    inner = np.sum(np.exp(-(scaled - shift)) * q, axis=-1) / mass
    if np.any(~(inner > 0)) or not np.all(np.isfinite(inner)):
        _raise_error(NumericUnderflow)
    return np.clip((shift[..., 0] - np.log(inner)) / gamma, lo, hi)


def certainty_equivalent(
    outcomes: Callable[[int, NDArray[np.float64]], ArrayLike],
    p_row: ArrayLike,
    gamma: float,
    shock: ShockModel,
    rule: QuadratureRule,
) -> float:
    """rho over joint (next regime, shock) outcomes.

    ``outcomes(theta_next, z)`` is called once per next regime with the array
    of quadrature nodes.
    """
    p_row = np.asarray(p_row, dtype=np.float64)
    z, q = rule.probabilities(shock)

    values = np.concatenate([
        np.broadcast_to(np.asarray(outcomes(theta_next, z), dtype=np.float64), z.shape)
        for theta_next in range(p_row.size)
    ])
    weights = (p_row[:, None] * q[None, :]).ravel()
    return float(entropic_aggregate(values, weights, gamma))
