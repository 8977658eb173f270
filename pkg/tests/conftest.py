import numpy as np
import pytest

from lqmfg import GameParams, TimeGrid


@pytest.fixture
def params():
    """Reference model coefficients (Shannon temperature 1)."""
    return GameParams(
        A=2.0, B=3.0, D=2.0, Q=3.0, Q_bar=2.0,
        lambda_se=1.0, lambda_ce=0.0, T=0.1,
        xi_mean=0.1, xi_second_moment=1.0,
    )


@pytest.fixture
def grid():
    return TimeGrid.from_horizon(0.1, 5)


def make_params(**overrides):
    base = dict(
        A=2.0, B=3.0, D=2.0, Q=3.0, Q_bar=2.0,
        lambda_se=1.0, lambda_ce=0.0, T=0.1,
        xi_mean=0.1, xi_second_moment=1.0,
    )
    base.update(overrides)
    return GameParams(**base)


def random_params(rng_: np.random.Generator, **overrides):
    """Valid random coefficients for property-style checks."""
    base = dict(
        A=rng_.uniform(0.5, 4.0),
        B=rng_.uniform(0.5, 4.0),
        D=rng_.uniform(0.5, 3.0),
        Q=rng_.uniform(0.5, 5.0),
        Q_bar=rng_.uniform(0.5, 5.0),
        lambda_se=rng_.uniform(0.2, 3.0),
        lambda_ce=rng_.uniform(0.0, 3.0),
        T=rng_.uniform(0.05, 1.0),
        xi_mean=rng_.uniform(-1.0, 1.0),
    )
    base["xi_second_moment"] = base["xi_mean"] ** 2 + rng_.uniform(0.0, 2.0)
    base.update(overrides)
    return GameParams(**base)
