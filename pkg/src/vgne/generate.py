"""Seeded random game factory.

Games are drawn so that strong monotonicity holds by construction: the
aggregate-coupling matrix is rescaled until its symmetric part is small
against the smallest curvature, and the coupling offset is set from an
interior point plus a positive margin, so a strictly feasible point always
exists.  The same factory feeds the CLI generator and the test suites.
"""

from __future__ import annotations

import numpy as np

from .game import (
    BoxSet,
    CouplingConstraint,
    GameSpec,
    QuadraticCost,
)
from .precond import operator_norm

__all__ = ["random_game", "random_point_in_box"]


def random_game(
    num_agents: int,
    decision_dim: int,
    num_constraints: int,
    seed: int,
    *,
    margin_range: tuple[float, float] = (0.1, 1.0),
) -> GameSpec:
    """Draw a bounded, strongly monotone quadratic game.

    Box bounds come from U[-3,-1] x U[1,3], curvatures from U[0.5, 2],
    and the shared aggregate matrix is scaled so its symmetric part has
    norm 0.35 times the smallest curvature, which keeps the gradient map
    strongly monotone for every number of agents.  With
    ``num_constraints > 0`` the offset is ``A x_c + margin`` at the box
    center ``x_c``, so the center is strictly feasible.
    """
    if num_agents < 1 or decision_dim < 1 or num_constraints < 0:
        raise ValueError(
            f"invalid shape: agents={num_agents}, dim={decision_dim}, "
            f"constraints={num_constraints}"
        )
    rng = np.random.default_rng(seed)
    N, n, m = num_agents, decision_dim, num_constraints

    lower = rng.uniform(-3.0, -1.0, size=(N, n))
    upper = rng.uniform(1.0, 3.0, size=(N, n))
    boxes = tuple(BoxSet(lower[i], upper[i]) for i in range(N))

    q = rng.uniform(0.5, 2.0, size=N)
    raw = rng.uniform(-1.0, 1.0, size=(n, n))
    sym_norm = operator_norm(0.5 * (raw + raw.T))
    scale = 0.35 * float(np.min(q)) / max(sym_norm, 1e-12)
    c = raw * scale
    d = rng.uniform(-2.0, 2.0, size=(N, n))
    cost = QuadraticCost(q=q, c=c, d=d)

    if m > 0:
        A = rng.uniform(-1.0, 1.0, size=(m, N * n))
        xc = np.concatenate([b.midpoint() for b in boxes])
        margin = rng.uniform(*margin_range, size=m)
        b = A @ xc + margin
        blocks = tuple(A[:, i * n : (i + 1) * n] for i in range(N))
        coupling = CouplingConstraint(blocks, b)
    else:
        coupling = CouplingConstraint.none(N, n)

    return GameSpec(
        num_agents=N,
        decision_dim=n,
        local_sets=boxes,
        cost=cost,
        coupling=coupling,
    )


def random_point_in_box(spec: GameSpec, seed: int) -> np.ndarray:
    """Uniform draw from the stacked local sets (bounded boxes only)."""
    from .game import stacked_bounds

    lo, hi = stacked_bounds(spec)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("random starts need bounded local sets")
    return np.random.default_rng(seed).uniform(lo, hi)
