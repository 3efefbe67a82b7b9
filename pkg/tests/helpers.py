import numpy as np

from regrowth.markov import validate_chain
from regrowth.model import ModelSpec
from regrowth.shock import ShockModel

DEFAULT_TRANSITION = [
    [0.50, 0.40, 0.10],
    [0.25, 0.50, 0.25],
    [0.10, 0.40, 0.50],
]


def make_spec(
    omega=(0.3, 0.5, 0.9),
    transition=DEFAULT_TRANSITION,
    shock=None,
    beta=0.9,
    gamma=1.0,
    sigma=0.5,
    r=633.0,
) -> ModelSpec:
    return ModelSpec(
        beta=beta,
        gamma=gamma,
        sigma=sigma,
        r=r,
        omega=np.array(omega, dtype=np.float64),
        chain=validate_chain(transition),
        shock=shock or ShockModel.lognormal(0.0, 1.0),
    )


def point_mass_spec(**kwargs) -> ModelSpec:
    kwargs.setdefault("r", 10.0)
    return make_spec(omega=(0.5,), transition=[[1.0]], shock=ShockModel.discrete([1.0], [1.0]), **kwargs)


def concave_field(rng, nodes, n_states, scale=1.0):
    """Random c * x**a per regime: non-negative, non-decreasing, concave."""
    c = rng.uniform(0.1, 2.0, n_states) * scale
    a = rng.uniform(0.2, 1.0, n_states)
    return c[None, :] * np.power(nodes[:, None], a[None, :])
