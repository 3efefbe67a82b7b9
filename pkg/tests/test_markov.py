import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import ConfigError, NonStochasticRow, ReducibleChain
from helpers import DEFAULT_TRANSITION
from regrowth.markov import stationary_distribution, validate_chain


def test_three_regime_chain_is_irreducible():
    chain = validate_chain(DEFAULT_TRANSITION)
    assert chain.n_states == 3
    assert chain.irreducible


def test_single_regime_chain():
    chain = validate_chain([[1.0]])
    assert chain.n_states == 1
    assert chain.irreducible
    assert_array_equal(stationary_distribution(chain), [1.0])


def test_identity_chain_is_flagged_reducible():
    chain = validate_chain([[1, 0], [0, 1]])
    assert not chain.irreducible
    with pytest.raises(ReducibleChain):
        stationary_distribution(chain)


def test_stationary_distribution_of_three_regime_chain():
    pi = stationary_distribution(validate_chain(DEFAULT_TRANSITION))
    assert_allclose(pi, np.array([5, 8, 5]) / 18, atol=1e-10)


def test_stationary_distribution_of_flip_chain():
    assert_allclose(stationary_distribution(validate_chain([[0, 1], [1, 0]])), [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_stationary_distribution_matches_power_iteration(seed):
    rng = np.random.default_rng(seed)
    matrix = rng.random((4, 4)) + 0.05
    matrix /= matrix.sum(axis=1, keepdims=True)
    chain = validate_chain(matrix)

    pi = np.full(4, 0.25)
    for _ in range(5000):
        pi = pi @ chain.transition

    result = stationary_distribution(chain)
    assert_allclose(result, pi, atol=1e-10)
    assert_allclose(result @ chain.transition, result, atol=1e-10)


def test_validate_chain_is_idempotent():
    chain = validate_chain([[0.5 + 5e-10, 0.5], [0.2, 0.8]])
    again = validate_chain(chain.transition)
    assert again == chain
    assert_array_equal(again.transition, chain.transition)
    assert validate_chain(chain) == chain


def test_decimal_rows_are_renormalized():
    chain = validate_chain([[0.5 + 5e-10, 0.5], [0.2, 0.8]])
    assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)


def test_row_that_does_not_sum_to_one_is_itemized():
    with pytest.raises(NonStochasticRow) as info:
        validate_chain([[0.5, 0.5], [0.3, 0.6]])
    assert list(info.value.details) == ["row 2"]
    assert isinstance(info.value, ConfigError)


def test_negative_entry_is_rejected():
    with pytest.raises(NonStochasticRow):
        validate_chain([[1.2, -0.2], [0.5, 0.5]])


def test_non_square_matrix_is_rejected():
    with pytest.raises(NonStochasticRow):
        validate_chain([[0.5, 0.5]])


def test_transition_is_read_only():
    chain = validate_chain(DEFAULT_TRANSITION)
    with pytest.raises(ValueError):
        chain.transition[0, 0] = 1.0
