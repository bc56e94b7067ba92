"""Monotone-operator view of the game: forward map, cones, residuals.

The variational equilibria are the zeros of ``T = A + B`` acting on the
stacked primal-dual variable ``w = col(x, lam)``:

- the forward (single-valued, cocoercive) part ``A(w) = col(F(x), b)``,
- the backward part ``B`` collecting the normal cones of the box sets and
  the nonnegative orthant together with the skew coupling block
  ``[[0, A'], [-A, 0]]``.

Zeros of the sum, fixed points of the preconditioned forward-backward
update, and points with vanishing natural residual all coincide; the
equivalence itself is exercised by :mod:`vgne.verification`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .game import BoxSet, GameSpec, PrimalDualPoint, pseudo_gradient, stacked_bounds

__all__ = [
    "SplitOperatorPair",
    "project_box",
    "project_nonneg",
    "normal_cone_membership",
    "eval_forward",
    "eval_T_residual",
    "stacked_box",
    "primal_dual_box",
    "split_operators",
]


def project_box(y: np.ndarray, box: BoxSet) -> np.ndarray:
    """Euclidean projection onto an axis-aligned box."""
    return np.minimum(np.maximum(np.asarray(y, dtype=float), box.lower), box.upper)


def project_nonneg(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(y, dtype=float), 0.0)


def normal_cone_membership(
    v: np.ndarray, x: np.ndarray, box: BoxSet, tol: float = 1e-9
) -> bool:
    """Whether ``v`` lies in the normal cone of ``box`` at ``x``, up to ``tol``.

    Coordinates within ``tol`` of a bound count as active there: at an
    active upper bound any ``v_j >= -tol`` is accepted, at an active lower
    bound any ``v_j <= tol``, and when both bounds are active (a pinned or
    very thin coordinate) every value passes.  Interior coordinates require
    ``|v_j| <= tol``.  A point outside the box beyond ``tol`` has an empty
    normal cone and raises.
    """
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    if v.shape != x.shape or x.shape != box.lower.shape:
        raise ValueError(
            f"normal cone check: mismatched shapes v{v.shape}, x{x.shape}, box({box.lower.shape})"
        )
    if not box.contains(x, tol):
        raise ValueError("normal cone is empty: point lies outside the box beyond tol")
    at_lower = x <= box.lower + tol
    at_upper = x >= box.upper - tol
    interior = ~at_lower & ~at_upper
    ok = np.ones(x.shape, dtype=bool)
    ok[interior] = np.abs(v[interior]) <= tol
    only_upper = at_upper & ~at_lower
    only_lower = at_lower & ~at_upper
    ok[only_upper] = v[only_upper] >= -tol
    ok[only_lower] = v[only_lower] <= tol
    # both bounds active: normal cone is the whole line, nothing to check
    return bool(ok.all())


def stacked_box(spec: GameSpec) -> BoxSet:
    """All local sets stacked into one box over the full primal variable."""
    lo, hi = stacked_bounds(spec)
    return BoxSet(lo, hi)


def primal_dual_box(spec: GameSpec) -> BoxSet:
    """Stacked box times the nonnegative orthant of the multiplier."""
    lo, hi = stacked_bounds(spec)
    m = spec.num_coupling_rows
    return BoxSet(
        np.concatenate([lo, np.zeros(m)]),
        np.concatenate([hi, np.full(m, np.inf)]),
    )


def eval_forward(point: PrimalDualPoint, spec: GameSpec) -> np.ndarray:
    """Forward part ``col(F(x), b)`` of the splitting at a primal-dual point.

    The multiplier never enters; two points differing only in ``lam`` give
    identical output.
    """
    return np.concatenate([pseudo_gradient(point.x, spec), spec.coupling.b])


def eval_T_residual(point: PrimalDualPoint, spec: GameSpec) -> float:
    """Natural residual of the equilibrium operator at unit step size.

    Computes the norm of ``col(x - P_box(x - (F(x) + A' lam)),
    lam - P_+(lam + A x - b))``.  The value is zero exactly at the
    variational equilibria and is independent of any solver step sizes, so
    runs with different preconditioners can be compared on it.  The primal
    part is clamped into its box before evaluation; the multiplier is taken
    as given, so negative components show up in the residual.
    """
    box = stacked_box(spec)
    x = project_box(point.x, box)
    lam = np.asarray(point.lam, dtype=float)
    A = spec.coupling.matrix()
    g = pseudo_gradient(x, spec) + A.T @ lam
    rx = x - project_box(x - g, box)
    rl = lam - project_nonneg(lam + (A @ x - spec.coupling.b))
    return float(np.sqrt(rx @ rx + rl @ rl))


@dataclass(frozen=True)
class SplitOperatorPair:
    """Forward/backward decomposition of the equilibrium operator.

    ``forward`` maps a stacked ``w`` to ``col(F(x), b)``; the backward part
    is the sum of the skew linear map ``skew @ w`` and the normal cone of
    ``cone`` (box coordinates followed by the orthant of the multiplier).
    """

    forward: Callable[[np.ndarray], np.ndarray]
    skew: np.ndarray
    cone: BoxSet

    def __post_init__(self):
        s = np.asarray(self.skew, dtype=float)
        if not np.allclose(s, -s.T, atol=1e-12):
            raise ValueError("skew block must satisfy S' = -S")
        object.__setattr__(self, "skew", s)


def split_operators(spec: GameSpec) -> SplitOperatorPair:
    """Assemble the standard splitting for a game."""
    nN = spec.dim
    A = spec.coupling.matrix()
    m = spec.num_coupling_rows
    skew = np.zeros((nN + m, nN + m))
    skew[:nN, nN:] = A.T
    skew[nN:, :nN] = -A

    def forward(w: np.ndarray) -> np.ndarray:
        return eval_forward(PrimalDualPoint.from_stacked(w, nN), spec)

    return SplitOperatorPair(forward=forward, skew=skew, cone=primal_dual_box(spec))
