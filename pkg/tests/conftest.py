import numpy as np
import pytest

import vgne


def make_box(lo, hi):
    return vgne.BoxSet(np.atleast_1d(np.asarray(lo, dtype=float)),
                       np.atleast_1d(np.asarray(hi, dtype=float)))


def scalar_game(q=1.0, c=0.0, d=-3.0, lo=-10.0, hi=10.0):
    """Single agent, one decision variable, no coupling."""
    return vgne.GameSpec(
        num_agents=1,
        decision_dim=1,
        local_sets=(make_box([lo], [hi]),),
        cost=vgne.QuadraticCost(q=np.array([q]), c=np.array([[c]]),
                                d=np.array([[d]])),
        coupling=vgne.CouplingConstraint.none(1, 1),
    )


@pytest.fixture
def drift_game():
    # F(x) = x - 3 on [-10, 10]: fixed point at 3
    return scalar_game()


@pytest.fixture
def shared_resource_game():
    # two agents on [0, 10] paying for the average, x1 + x2 <= 1 binds;
    # equilibrium x* = (0.5, 0.5) with multiplier 0.75
    return vgne.GameSpec(
        num_agents=2,
        decision_dim=1,
        local_sets=(make_box([0.0], [10.0]),) * 2,
        cost=vgne.QuadraticCost(q=np.array([1.0, 1.0]), c=np.array([[1.0]]),
                                d=np.array([[-2.0], [-2.0]])),
        coupling=vgne.CouplingConstraint(
            a_blocks=(np.array([[1.0]]), np.array([[1.0]])),
            b=np.array([1.0]),
        ),
    )


@pytest.fixture
def coupled_game():
    return vgne.random_game(num_agents=4, decision_dim=2, num_constraints=2, seed=20)


@pytest.fixture
def free_game():
    return vgne.random_game(num_agents=5, decision_dim=1, num_constraints=0, seed=21)


def feasible_pair(spec, rng):
    """A random primal-dual point with x in the boxes and lam >= 0."""
    lo, hi = vgne.stacked_bounds(spec)
    x = rng.uniform(lo, hi)
    lam = rng.uniform(0.0, 2.0, size=spec.num_coupling_rows)
    return vgne.PrimalDualPoint(x=x, lam=lam)
