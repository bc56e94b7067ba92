"""Average-aggregative game model with box local sets and affine coupling.

A game has ``N`` agents, each choosing ``x_i`` inside a box in R^n.  Costs
depend on the own decision and on the average ``sigma(x) = (1/N) sum_i x_i``;
shared resources are modeled by one affine constraint ``A x <= b`` whose
columns are distributed blockwise over the agents.  The variational
equilibria of such a game are the zeros of the monotone operator assembled
in :mod:`vgne.operators`.

All model objects are frozen dataclasses holding read-only arrays, so they
can be shared freely between threads and solver instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConstantsUnavailableError, DimensionError

__all__ = [
    "BoxSet",
    "QuadraticCost",
    "OracleCost",
    "CouplingConstraint",
    "Monotonicity",
    "GameSpec",
    "PrimalDualPoint",
    "FeasibilityReport",
    "aggregate",
    "pseudo_gradient",
    "extended_pseudo_gradient",
    "feasibility_check",
    "stacked_bounds",
    "affine_gradient_form",
    "exact_constants",
    "resolve_constants",
    "default_start",
]


def _readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _expect_shape(name: str, arr: np.ndarray, shape: tuple) -> None:
    if arr.shape != shape:
        raise DimensionError(
            f"{name}: expected shape {shape}, received {arr.shape}"
        )


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{v : lower <= v <= upper}``; bounds may be infinite.

    A coordinate with ``lower == upper`` pins that component.  Unbounded
    boxes are legal model objects; compactness is only enforced when a
    solve is launched.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _readonly(np.atleast_1d(self.lower))
        hi = _readonly(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError(
                f"box bounds: expected matching 1-d shapes, received {lo.shape} vs {hi.shape}"
            )
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not contain NaN")
        if np.any(lo > hi):
            j = int(np.argmax(lo > hi))
            raise ValueError(f"box is empty: lower[{j}]={lo[j]} > upper[{j}]={hi[j]}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def midpoint(self) -> np.ndarray:
        # Analytic center for bounded boxes; finite fallback otherwise.
        lo = np.where(np.isfinite(self.lower), self.lower, -1.0)
        hi = np.where(np.isfinite(self.upper), self.upper, 1.0)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadraticCost:
    """Cost family ``f_i(x_i, s) = q_i/2 ||x_i||^2 + (c s + d_i)' x_i``.

    ``q`` holds one positive curvature scalar per agent, ``c`` is a single
    shared n-by-n matrix coupling the decision to the average, and ``d``
    stacks one linear term per agent (row ``i`` belongs to agent ``i``).
    """

    q: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        q = _readonly(np.atleast_1d(self.q))
        c = _readonly(np.atleast_2d(self.c))
        d = _readonly(np.atleast_2d(self.d))
        if q.ndim != 1:
            raise DimensionError(f"cost q: expected 1-d, received shape {q.shape}")
        if np.any(q <= 0):
            i = int(np.argmax(q <= 0))
            raise ValueError(f"cost q[{i}]={q[i]} must be positive")
        n = c.shape[0]
        _expect_shape("cost c", c, (n, n))
        _expect_shape("cost d", d, (q.shape[0], n))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def num_agents(self) -> int:
        return self.q.shape[0]

    @property
    def decision_dim(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class OracleCost:
    """Black-box cost given by per-agent gradient callables.

    ``grads[i](x_i, s)`` must return the gradient of agent ``i``'s cost with
    respect to its own decision, evaluated as if ``s`` were the average of
    all decisions (the chain-rule term through the average is the caller's
    responsibility and must already be included).  ``grads=None`` declares
    the cost external but unbound, e.g. a spec loaded from disk; evaluating
    it raises until gradients are attached.
    """

    grads: tuple | None = None

    def __post_init__(self):
        if self.grads is not None:
            object.__setattr__(self, "grads", tuple(self.grads))

    def bound(self) -> bool:
        return self.grads is not None


CostModel = QuadraticCost | OracleCost


@dataclass(frozen=True)
class CouplingConstraint:
    """Affine shared constraint ``A x <= b`` with blockwise columns.

    ``a_blocks[i]`` is the m-by-n column block acting on agent ``i``'s
    decision; the full matrix is their horizontal concatenation.  ``m = 0``
    (no coupling) is represented by blocks of shape (0, n), so the object
    still carries the decision dimension.
    """

    a_blocks: tuple
    b: np.ndarray

    def __post_init__(self):
        blocks = tuple(_readonly(np.atleast_2d(blk)) for blk in self.a_blocks)
        if not blocks:
            raise DimensionError("coupling: expected at least one column block, received 0")
        m, n = blocks[0].shape
        for i, blk in enumerate(blocks):
            _expect_shape(f"coupling block {i}", blk, (m, n))
        b = _readonly(np.atleast_1d(self.b))
        _expect_shape("coupling b", b, (m,))
        object.__setattr__(self, "a_blocks", blocks)
        object.__setattr__(self, "b", b)

    @classmethod
    def none(cls, num_agents: int, decision_dim: int) -> "CouplingConstraint":
        """Empty constraint set (m = 0) for the given game shape."""
        blocks = tuple(np.zeros((0, decision_dim)) for _ in range(num_agents))
        return cls(blocks, np.zeros(0))

    @property
    def num_rows(self) -> int:
        return self.a_blocks[0].shape[0]

    @property
    def num_agents(self) -> int:
        return len(self.a_blocks)

    @property
    def decision_dim(self) -> int:
        return self.a_blocks[0].shape[1]

    def matrix(self) -> np.ndarray:
        """Full m-by-nN matrix [A_1 ... A_N]."""
        return np.hstack(self.a_blocks)


@dataclass(frozen=True)
class Monotonicity:
    """Strong-monotonicity modulus and Lipschitz constant of the gradient map."""

    eta: float
    lip_f: float

    def __post_init__(self):
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError(f"eta={self.eta} must be a positive finite number")
        if not (self.lip_f > 0 and np.isfinite(self.lip_f)):
            raise ValueError(f"lip_f={self.lip_f} must be a positive finite number")
        if self.eta > self.lip_f:
            raise ValueError(f"eta={self.eta} cannot exceed lip_f={self.lip_f}")


@dataclass(frozen=True)
class GameSpec:
    """Complete description of one aggregative game.

    Parameters
    ----------
    num_agents : int
        Number of agents ``N >= 1``.
    decision_dim : int
        Dimension ``n >= 1`` of each agent's decision.
    local_sets : sequence of BoxSet
        One box per agent, each of dimension ``n``.
    cost : QuadraticCost or OracleCost
        The cost model shared by gradient evaluations.
    coupling : CouplingConstraint
        Affine shared constraint; use :meth:`CouplingConstraint.none` when absent.
    monotonicity : Monotonicity, optional
        Known constants of the gradient map.  For quadratic costs exact
        values are derivable and this field may stay ``None``.
    """

    num_agents: int
    decision_dim: int
    local_sets: tuple
    cost: CostModel
    coupling: CouplingConstraint
    monotonicity: Monotonicity | None = None

    def __post_init__(self):
        N, n = self.num_agents, self.decision_dim
        if N < 1 or n < 1:
            raise ValueError(f"game shape N={N}, n={n} must both be at least 1")
        sets = tuple(self.local_sets)
        if len(sets) != N:
            raise DimensionError(f"local_sets: expected {N} boxes, received {len(sets)}")
        for i, box in enumerate(sets):
            if box.dim != n:
                raise DimensionError(
                    f"local set {i}: expected dimension {n}, received {box.dim}"
                )
        if isinstance(self.cost, QuadraticCost):
            if self.cost.num_agents != N:
                raise DimensionError(
                    f"cost q: expected {N} entries, received {self.cost.num_agents}"
                )
            if self.cost.decision_dim != n:
                raise DimensionError(
                    f"cost c: expected {n}x{n}, received "
                    f"{self.cost.c.shape[0]}x{self.cost.c.shape[1]}"
                )
        elif isinstance(self.cost, OracleCost):
            if self.cost.grads is not None and len(self.cost.grads) != N:
                raise DimensionError(
                    f"cost gradients: expected {N} callables, received {len(self.cost.grads)}"
                )
        else:
            raise TypeError(f"unsupported cost model {type(self.cost).__name__}")
        if self.coupling.num_agents != N or self.coupling.decision_dim != n:
            raise DimensionError(
                f"coupling blocks: expected {N} blocks of width {n}, received "
                f"{self.coupling.num_agents} of width {self.coupling.decision_dim}"
            )
        object.__setattr__(self, "local_sets", sets)

    @property
    def dim(self) -> int:
        """Stacked primal dimension nN."""
        return self.num_agents * self.decision_dim

    @property
    def num_coupling_rows(self) -> int:
        return self.coupling.num_rows

    def blocks_of(self, x: np.ndarray) -> np.ndarray:
        """View a stacked decision as an (N, n) array of agent blocks."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"decision: expected shape ({self.dim},), received {x.shape}")
        return x.reshape(self.num_agents, self.decision_dim)

    def all_sets_bounded(self) -> bool:
        return all(box.is_bounded() for box in self.local_sets)


@dataclass(frozen=True)
class PrimalDualPoint:
    """Stacked primal decision plus one shared multiplier for the coupling."""

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "lam", _readonly(np.asarray(self.lam, dtype=float).reshape(-1)))

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam])

    @classmethod
    def from_stacked(cls, w: np.ndarray, primal_dim: int) -> "PrimalDualPoint":
        w = np.asarray(w, dtype=float)
        return cls(w[:primal_dim], w[primal_dim:])


@dataclass(frozen=True)
class FeasibilityReport:
    """Componentwise feasibility audit of a primal-dual point.

    ``box_violation[j]`` is how far stacked coordinate ``j`` sits outside
    its box, ``coupling_values`` holds ``A x - b`` rowwise, and
    ``multiplier_violation`` the negative parts of the multiplier.
    """

    box_violation: np.ndarray
    coupling_values: np.ndarray
    multiplier_violation: np.ndarray
    tol: float
    feasible: bool = field(init=False)
    violated_box_coords: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "box_violation", _readonly(self.box_violation))
        object.__setattr__(self, "coupling_values", _readonly(self.coupling_values))
        object.__setattr__(self, "multiplier_violation", _readonly(self.multiplier_violation))
        bad = np.nonzero(self.box_violation > self.tol)[0]
        ok = (
            bad.size == 0
            and bool(np.all(self.coupling_values <= self.tol))
            and bool(np.all(self.multiplier_violation <= self.tol))
        )
        object.__setattr__(self, "feasible", ok)
        object.__setattr__(self, "violated_box_coords", tuple(int(j) for j in bad))

    @property
    def max_coupling(self) -> float:
        """Largest value of A x - b, or -inf when there is no coupling."""
        return float(np.max(self.coupling_values)) if self.coupling_values.size else float("-inf")

    @property
    def margin(self) -> float:
        """Slack to the coupling constraint; +inf when there is no coupling."""
        return -self.max_coupling


# -- evaluation ---------------------------------------------------------------


def aggregate(x: np.ndarray, spec: GameSpec) -> np.ndarray:
    """Average of the agent blocks of a stacked decision."""
    return spec.blocks_of(x).mean(axis=0)


def _oracle_grad(spec: GameSpec, i: int, xi: np.ndarray, s: np.ndarray) -> np.ndarray:
    cost = spec.cost
    if cost.grads is None:
        raise ValueError("oracle cost is declared external but has no gradients bound")
    g = np.asarray(cost.grads[i](xi, s), dtype=float).reshape(-1)
    if g.shape != (spec.decision_dim,):
        raise DimensionError(
            f"gradient oracle {i}: expected {spec.decision_dim} components, received {g.shape[0]}"
        )
    if not np.all(np.isfinite(g)):
        raise ValueError(f"gradient oracle {i} returned non-finite values")
    return g


def pseudo_gradient(x: np.ndarray, spec: GameSpec) -> np.ndarray:
    """Stacked own-decision gradients of all agents at the true average.

    For the quadratic family agent ``i`` contributes
    ``q_i x_i + c sigma(x) + (1/N) c' x_i + d_i``; the middle terms carry
    the dependence on the average, including the chain-rule part.
    """
    X = spec.blocks_of(x)
    s = X.mean(axis=0)
    cost = spec.cost
    if isinstance(cost, QuadraticCost):
        G = (
            cost.q[:, None] * X
            + (cost.c @ s)[None, :]
            + (X @ cost.c) / spec.num_agents
            + cost.d
        )
        return G.reshape(-1)
    return np.concatenate(
        [_oracle_grad(spec, i, X[i], s) for i in range(spec.num_agents)]
    )


def extended_pseudo_gradient(
    x: np.ndarray,
    z: np.ndarray,
    spec: GameSpec,
    convention: str = "partial",
) -> np.ndarray:
    """Gradients evaluated at per-agent aggregate estimates ``z_i``.

    ``z`` stacks one estimate of the average per agent.  Two conventions
    are supported and the choice matters whenever ``c`` is nonzero:

    - ``"partial"``: derivative with respect to the own decision holding
      the estimate fixed, ``q_i x_i + c z_i + d_i`` for quadratic costs.
    - ``"total_at_estimate"``: the full own-gradient with the estimate
      substituted for the average, adding the chain-rule term
      ``(1/N) c' x_i``.  With consistent estimates ``z_i = sigma(x)`` this
      reproduces :func:`pseudo_gradient` exactly.

    Oracle costs only expose the second convention, since their callables
    already include the chain-rule term.
    """
    X = spec.blocks_of(x)
    Z = spec.blocks_of(z)
    cost = spec.cost
    if convention not in ("partial", "total_at_estimate"):
        raise ValueError(f"unknown convention {convention!r}")
    if isinstance(cost, QuadraticCost):
        G = cost.q[:, None] * X + Z @ cost.c.T + cost.d
        if convention == "total_at_estimate":
            G = G + (X @ cost.c) / spec.num_agents
        return G.reshape(-1)
    if convention == "partial":
        raise ValueError(
            "oracle costs expose only the 'total_at_estimate' convention; "
            "their gradient callables already include the chain-rule term"
        )
    return np.concatenate(
        [_oracle_grad(spec, i, X[i], Z[i]) for i in range(spec.num_agents)]
    )


def feasibility_check(
    point: PrimalDualPoint, spec: GameSpec, tol: float = 1e-9
) -> FeasibilityReport:
    """Audit box membership, coupling rows, and multiplier sign at ``tol``."""
    lo, hi = stacked_bounds(spec)
    x = np.asarray(point.x, dtype=float)
    if x.shape != (spec.dim,):
        raise DimensionError(f"decision: expected shape ({spec.dim},), received {x.shape}")
    m = spec.num_coupling_rows
    if point.lam.shape != (m,):
        raise DimensionError(
            f"multiplier: expected {m} components, received {point.lam.shape[0]}"
        )
    box_gap = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    # -inf bounds produce -inf gaps before the clamp; scrub any NaN from inf-inf
    box_gap = np.where(np.isnan(box_gap), 0.0, box_gap)
    Ax_b = spec.coupling.matrix() @ x - spec.coupling.b
    return FeasibilityReport(
        box_violation=box_gap,
        coupling_values=Ax_b,
        multiplier_violation=np.maximum(-point.lam, 0.0),
        tol=float(tol),
    )


# -- derived quantities -------------------------------------------------------


def stacked_bounds(spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated lower and upper bounds of all local boxes."""
    lo = np.concatenate([box.lower for box in spec.local_sets])
    hi = np.concatenate([box.upper for box in spec.local_sets])
    return lo, hi


def affine_gradient_form(spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Matrix form ``(H, d)`` with ``pseudo_gradient(x) = H x + d``.

    Only quadratic costs admit this form.  The diagonal blocks are
    ``q_i I + (c + c') / N`` and every off-diagonal block is ``c / N``.
    """
    cost = spec.cost
    if not isinstance(cost, QuadraticCost):
        raise TypeError("affine gradient form requires a quadratic cost")
    N, n = spec.num_agents, spec.decision_dim
    H = np.kron(np.ones((N, N)), cost.c / N)
    diag_add = np.kron(np.eye(N), cost.c.T / N)
    H += diag_add
    H += np.kron(np.diag(cost.q), np.eye(n))
    return H, cost.d.reshape(-1).copy()


def exact_constants(spec: GameSpec) -> Monotonicity:
    """Exact monotonicity constants of the affine gradient map.

    ``eta`` is the smallest eigenvalue of the symmetric part of ``H`` and
    ``lip_f`` its largest singular value.  Raises when the game is not
    strongly monotone.
    """
    H, _ = affine_gradient_form(spec)
    sym = 0.5 * (H + H.T)
    eta = float(np.linalg.eigvalsh(sym)[0])
    lip = float(np.linalg.norm(H, 2))
    if eta <= 0:
        raise ValueError(f"gradient map is not strongly monotone: min eigenvalue {eta}")
    return Monotonicity(eta=eta, lip_f=lip)


def resolve_constants(spec: GameSpec) -> Monotonicity:
    """Monotonicity constants from the spec, or exact ones for quadratic costs.

    Oracle costs without declared constants raise; sampled estimates are
    never substituted silently.  Estimate first, then attach the result to
    the spec explicitly.
    """
    if spec.monotonicity is not None:
        return spec.monotonicity
    if isinstance(spec.cost, QuadraticCost):
        return exact_constants(spec)
    raise ConstantsUnavailableError(
        "monotonicity constants are required: attach Monotonicity(eta, lip_f) to the "
        "spec (for oracle costs they cannot be derived automatically)"
    )


def default_start(spec: GameSpec) -> PrimalDualPoint:
    """Projection of the origin onto the local sets, with a zero multiplier."""
    lo, hi = stacked_bounds(spec)
    x0 = np.clip(0.0, lo, hi)
    return PrimalDualPoint(x=x0, lam=np.zeros(spec.num_coupling_rows))
