import numpy as np
import pytest

from gwpersuasion.model import InformationPolicy, ProblemInstance, matching_instance


def random_instance(rng, shape=(2, 2, 2), rates=None, separable=False, integer=False):
    nu, n1, n2 = shape
    draw = (lambda s: rng.integers(0, 3, size=s).astype(float)) if integer else rng.random
    if separable:
        cost_e = draw((nu, n1))[:, :, None] + draw((nu, n2))[:, None, :]
    else:
        cost_e = draw(shape)
    if rates is None:
        rates = tuple(rng.choice([0.0, 0.25, 0.5, 1.0], 3))
    return ProblemInstance(tuple(f"u{i}" for i in range(nu)), tuple(f"a{i}" for i in range(n1)),
                           tuple(f"b{i}" for i in range(n2)), rng.dirichlet(np.ones(nu)),
                           cost_e, draw(shape), draw(shape), rates)


def random_policy(rng, nu, cards, alpha=1.0):
    k0, k1, k2 = cards
    return InformationPolicy.from_arrays(rng.dirichlet(np.full(k0, alpha), nu),
                                         rng.dirichlet(np.full(k1, alpha), (nu, k0)),
                                         rng.dirichlet(np.full(k2, alpha), (nu, k0)))


@pytest.fixture
def matching():
    return matching_instance((1.0, 1.0, 1.0))
