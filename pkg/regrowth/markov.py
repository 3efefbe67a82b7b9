"""Finite regime chain: validation, irreducibility and stationary law."""
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components

from core.errors import NonStochasticRow, ReducibleChain, _raise_error

logger = logging.getLogger(__name__)

__all__ = (
    "RegimeChain",
    "validate_chain",
    "stationary_distribution",
)

ROW_SUM_TOL = 1e-9
RENORMALIZE_TOL = 64 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class RegimeChain:
    """Validated row-stochastic matrix. Regimes are 0-based internally."""

    n_states: int
    transition: NDArray[np.float64]
    irreducible: bool

    def row(self, theta: int) -> NDArray[np.float64]:
        return self.transition[theta]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegimeChain):
            return NotImplemented
        return (
            self.n_states == other.n_states
            and self.irreducible == other.irreducible
            and np.array_equal(self.transition, other.transition)
        )

    def __hash__(self) -> int:
        return hash((self.n_states, self.irreducible, self.transition.tobytes()))


def _is_irreducible(transition: NDArray[np.float64]) -> bool:
    n_components, _ = connected_components(transition > 0, directed=True, connection="strong")
    return n_components == 1


def validate_chain(transition: Union[Sequence[Sequence[float]], NDArray[np.float64], RegimeChain]) -> RegimeChain:
    if isinstance(transition, RegimeChain):
        transition = transition.transition

    matrix = np.array(transition, dtype=np.float64)

    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        _raise_error(NonStochasticRow, custom_error=f"transition must be a non-empty square matrix, got shape {matrix.shape}")

    errors = {}
    for i, row in enumerate(matrix):
        problems = []
        if not np.all(np.isfinite(row)):
            problems.append("non-finite entry")
        elif np.any(row < 0) or np.any(row > 1 + ROW_SUM_TOL):
            problems.append("entry outside [0, 1]")
        elif abs(row.sum() - 1.0) > ROW_SUM_TOL:
            problems.append(f"row sums to {row.sum():.12g}")
        if problems:
            errors[f"row {i + 1}"] = problems
    if errors:
        _raise_error(NonStochasticRow, error_details=errors)

    matrix = np.clip(matrix, 0.0, 1.0)
    sums = matrix.sum(axis=1)
    # rows already stochastic to rounding are left bit-identical
    drift = np.abs(sums - 1.0) > RENORMALIZE_TOL
    matrix[drift] = matrix[drift] / sums[drift, None]
    matrix.flags.writeable = False

    irreducible = _is_irreducible(matrix)
    if not irreducible:
        logger.warning("Regime chain is reducible (D3 violated)", extra={"n_states": matrix.shape[0]})

    return RegimeChain(n_states=matrix.shape[0], transition=matrix, irreducible=irreducible)


def stationary_distribution(chain: RegimeChain) -> NDArray[np.float64]:
    """Solve (p^T - I) pi = 0 with one equation replaced by sum(pi) = 1."""
    if not chain.irreducible:
        _raise_error(ReducibleChain)

    n = chain.n_states
    system = chain.transition.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0

    pi = np.linalg.solve(system, rhs)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
