"""Independent certification tools: an enumeration oracle, optimality
audits, design-inclusion checks, and sampled operator constants.

Nothing here shares iteration code with the solvers.  The oracle solves
the full first-order system by exhaustive active-set enumeration; the
audits re-derive optimality and inclusion conditions from their
definitions.  Agreement between the two worlds is what the test suite is
built on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    EquilibriumCountError,
    OracleBudgetError,
)
from .game import (
    BoxSet,
    GameSpec,
    Monotonicity,
    PrimalDualPoint,
    QuadraticCost,
    affine_gradient_form,
    pseudo_gradient,
    extended_pseudo_gradient,
    stacked_bounds,
)
from .network import CommGraph
from .operators import normal_cone_membership

__all__ = [
    "KktReport",
    "SampledConstants",
    "EquivalenceReport",
    "ConsensusSplitting",
    "oracle_vgne",
    "check_kkt",
    "check_fb_inclusion",
    "consensus_splitting",
    "estimate_constants",
    "check_zer_fix_equivalence",
]


# -- optimality audit -----------------------------------------------------------


@dataclass(frozen=True)
class KktReport:
    """First-order optimality residuals of a primal-dual point.

    ``stationarity[i]`` is the distance from the negated gradient-plus-
    multiplier term of agent ``i`` to the normal cone of its box (infinite
    when the decision sits outside the box beyond the activation band).
    The scalar gaps cover coupling feasibility, multiplier sign, and
    complementarity.  ``tol`` records the activation band used.
    """

    stationarity: np.ndarray
    primal_violation: float
    dual_violation: float
    complementarity: float
    tol: float

    def __post_init__(self):
        s = np.asarray(self.stationarity, dtype=float).copy()
        s.setflags(write=False)
        object.__setattr__(self, "stationarity", s)

    @property
    def max_stationarity(self) -> float:
        return float(np.max(self.stationarity)) if self.stationarity.size else 0.0

    def passes(self, tol: float | None = None) -> bool:
        t = self.tol if tol is None else tol
        return bool(
            self.max_stationarity <= t
            and self.primal_violation <= t
            and self.dual_violation <= t
            and self.complementarity <= t
        )


def _cone_distance(v: np.ndarray, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, band: float) -> float:
    """Distance from v to the normal cone of [lo, hi] at x, band-activated."""
    if np.any(x < lo - band) or np.any(x > hi + band):
        return float("inf")
    at_lower = x <= lo + band
    at_upper = x >= hi - band
    d = np.abs(v).astype(float)
    d[at_lower & ~at_upper] = np.maximum(v[at_lower & ~at_upper], 0.0)
    d[at_upper & ~at_lower] = np.maximum(-v[at_upper & ~at_lower], 0.0)
    d[at_lower & at_upper] = 0.0
    return float(np.sqrt(np.sum(d * d)))


def check_kkt(point: PrimalDualPoint, spec: GameSpec, tol: float = 1e-6) -> KktReport:
    """Audit the first-order conditions of a candidate equilibrium.

    Always returns a report; use :meth:`KktReport.passes` for the verdict.
    ``tol`` doubles as the band deciding which bounds count as active.
    """
    A = spec.coupling.matrix()
    g = pseudo_gradient(point.x, spec)
    if A.shape[0]:
        g = g + A.T @ point.lam
    v = -g
    N, n = spec.num_agents, spec.decision_dim
    X = point.x.reshape(N, n)
    V = v.reshape(N, n)
    stat = np.empty(N)
    for i, box in enumerate(spec.local_sets):
        stat[i] = _cone_distance(V[i], X[i], box.lower, box.upper, tol)
    if A.shape[0]:
        slack = A @ point.x - spec.coupling.b
        primal = float(max(np.max(slack), 0.0))
        dual = float(max(np.max(-point.lam), 0.0))
        comp = float(abs(point.lam @ slack))
    else:
        primal = dual = comp = 0.0
    return KktReport(
        stationarity=stat,
        primal_violation=primal,
        dual_violation=dual,
        complementarity=comp,
        tol=tol,
    )


# -- enumeration oracle ---------------------------------------------------------


def _strict_interior_point(spec: GameSpec) -> np.ndarray:
    """Search for a point of the box with ``Ax < b`` strictly.

    The box center is tried first.  When it violates the coupling, the
    largest achievable slack is computed exactly by a small linear program
    (maximize ``t`` subject to ``Ax + t <= b`` over the box); only when
    even that optimum has no strictly positive slack is the game declared
    infeasible.
    """
    xc = np.concatenate([box.midpoint() for box in spec.local_sets])
    if not spec.num_coupling_rows:
        return xc
    A = spec.coupling.matrix()
    b = spec.coupling.b
    if np.all(A @ xc - b < 0):
        return xc
    # variables (x, t): maximize the uniform slack t with Ax + t*1 <= b
    from scipy.optimize import linprog

    lo, hi = stacked_bounds(spec)
    cost = np.zeros(spec.dim + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([A, np.ones((A.shape[0], 1))])
    bounds = [(float(l), float(h)) for l, h in zip(lo, hi)]
    bounds.append((None, None))
    res = linprog(cost, A_ub=a_ub, b_ub=b, bounds=bounds, method="highs")
    scale = 1.0 + float(np.max(np.abs(b), initial=0.0))
    if res.status == 0 and res.x[-1] > 1e-12 * scale:
        return np.asarray(res.x[:-1], dtype=float)
    raise ValueError(
        "strict feasibility search failed: no point of the box satisfies "
        "the coupling with strict inequality; the oracle requires one"
    )


def oracle_vgne(
    spec: GameSpec,
    *,
    tol: float = 1e-9,
    max_candidates: int = 1_000_000,
    chunk: int = 20_000,
) -> PrimalDualPoint:
    """Certified equilibrium by exhaustive active-set enumeration.

    Every assignment of {interior, at lower, at upper} per coordinate and
    {active, inactive} per coupling row defines a square linear system in
    ``(x, mu)``; each candidate solution is verified against the full sign
    and feasibility conditions at ``tol``.  Quadratic costs only.  The
    enumeration size ``3^(nN) * 2^m`` must stay within ``max_candidates``.
    Exactly one distinct verified solution must emerge; zero or several
    raise.  No iterative solver is involved anywhere.
    """
    if not isinstance(spec.cost, QuadraticCost):
        raise TypeError("the enumeration oracle requires a quadratic cost")
    nN = spec.dim
    m = spec.num_coupling_rows
    total = 3**nN * 2**m
    if total > max_candidates:
        raise OracleBudgetError(
            f"enumeration needs {total} candidates for nN={nN}, m={m}, "
            f"above the budget of {max_candidates}"
        )
    _strict_interior_point(spec)

    H, dvec = affine_gradient_form(spec)
    A = spec.coupling.matrix()
    b = spec.coupling.b
    lo, hi = stacked_bounds(spec)
    s = nN + m

    # base system: stationarity rows over free coordinates, coupling rows active
    K0 = np.zeros((s, s))
    K0[:nN, :nN] = H
    K0[:nN, nN:] = A.T
    K0[nN:, :nN] = A
    rhs0 = np.concatenate([-dvec, b])

    pow3 = 3 ** np.arange(nN, dtype=np.int64)
    pow2 = 2 ** np.arange(m, dtype=np.int64) * 3**nN

    found_x: list[np.ndarray] = []
    found_mu: list[np.ndarray] = []

    for start in range(0, total, chunk):
        cids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        box_state = (cids[:, None] // pow3[None, :]) % 3  # 0 free, 1 lower, 2 upper
        row_state = (cids[:, None] // pow2[None, :]) % 2 if m else np.zeros((cids.size, 0), dtype=np.int64)

        # candidates pinning a coordinate at an infinite bound are meaningless
        valid = ~(
            ((box_state == 1) & ~np.isfinite(lo)[None, :])
            | ((box_state == 2) & ~np.isfinite(hi)[None, :])
        ).any(axis=1)
        if not valid.any():
            continue
        box_state = box_state[valid]
        row_state = row_state[valid]
        B = box_state.shape[0]

        K = np.repeat(K0[None], B, axis=0)
        rhs = np.repeat(rhs0[None], B, axis=0)

        ci, cj = np.nonzero(box_state > 0)
        K[ci, cj, :] = 0.0
        K[ci, cj, cj] = 1.0
        rhs[ci, cj] = np.where(box_state[ci, cj] == 1, lo[cj], hi[cj])
        if m:
            ri, rk = np.nonzero(row_state == 0)  # inactive rows pin mu_k = 0
            K[ri, nN + rk, :] = 0.0
            K[ri, nN + rk, nN + rk] = 1.0
            rhs[ri, nN + rk] = 0.0

        try:
            sol = np.linalg.solve(K, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            # some candidate system is exactly singular; fall back one by one
            sol = np.full((B, s), np.nan)
            for t in range(B):
                try:
                    sol[t] = np.linalg.solve(K[t], rhs[t])
                except np.linalg.LinAlgError:
                    pass

        xs = sol[:, :nN]
        mus = sol[:, nN:]
        ok = np.isfinite(sol).all(axis=1)
        ok &= (xs >= lo[None, :] - tol).all(axis=1)
        ok &= (xs <= hi[None, :] + tol).all(axis=1)
        grad = xs @ H.T + dvec[None, :]
        if m:
            grad = grad + mus @ A
        bad = (box_state == 0) & (np.abs(grad) > tol)
        bad |= (box_state == 1) & (grad < -tol)
        bad |= (box_state == 2) & (grad > tol)
        ok &= ~bad.any(axis=1)
        if m:
            slack = xs @ A.T - b[None, :]
            bad_r = (row_state == 1) & ((mus < -tol) | (np.abs(slack) > tol))
            bad_r |= (row_state == 0) & (slack > tol)
            ok &= ~bad_r.any(axis=1)

        for t in np.nonzero(ok)[0]:
            found_x.append(xs[t])
            found_mu.append(mus[t])

    if not found_x:
        raise EquilibriumCountError(
            "no candidate satisfied the full optimality system; the game may "
            "not be strongly monotone or the tolerance is too tight"
        )
    rep_x, rep_mu = found_x[0], found_mu[0]
    same_tol = 1e-6 * (1.0 + float(np.max(np.abs(rep_x))))
    for xx in found_x[1:]:
        if np.max(np.abs(xx - rep_x)) > same_tol:
            raise EquilibriumCountError(
                "enumeration produced several distinct solutions; the game is "
                "not strongly monotone enough for a unique equilibrium"
            )
    # clamp the at-most-tol overshoots introduced by the linear solves
    x_final = np.minimum(np.maximum(rep_x, lo), hi)
    mu_final = np.maximum(rep_mu, 0.0)
    return PrimalDualPoint(x=x_final, lam=mu_final)


# -- design inclusion -----------------------------------------------------------


def check_fb_inclusion(
    prev: np.ndarray,
    nxt: np.ndarray,
    forward_value: np.ndarray,
    skew: np.ndarray,
    cone: BoxSet,
    phi: np.ndarray,
    tol: float = 1e-8,
    extra_linear: np.ndarray | None = None,
) -> bool:
    """Verify one iterate pair against the defining inclusion of the update.

    The update is characterized by membership of

        -forward(prev) - S next - L next - Phi (next - prev)

    in the normal cone of ``cone`` at ``next`` (``S`` the skew block, ``L``
    an optional extra monotone linear part).  ``forward_value`` is the
    forward map already evaluated at ``prev``.  Free coordinates (infinite
    bounds) require the residual to vanish within ``tol``.
    """
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    r = -np.asarray(forward_value, dtype=float) - skew @ nxt - phi @ (nxt - prev)
    if extra_linear is not None:
        r = r - extra_linear @ nxt
    return normal_cone_membership(r, nxt, cone, tol)


@dataclass(frozen=True)
class ConsensusSplitting:
    """Dense pieces of the augmented splitting behind the consensus update.

    On the stacked variable ``col(x, sigma)`` the forward part couples the
    extended gradient with the neighborhood-exchange matrix ``P``; the
    backward part holds the box normal cones, a skew exchange block, and
    the graph Laplacian acting on the estimates.  Used by the inclusion
    audit; the solver itself never materializes these matrices.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    skew: np.ndarray
    extra_linear: np.ndarray
    cone: BoxSet
    phi: np.ndarray


def consensus_splitting(
    spec: GameSpec,
    graph: CommGraph,
    alpha: float,
    convention: str = "total_at_estimate",
) -> ConsensusSplitting:
    """Assemble the augmented splitting for a game on a graph."""
    if spec.num_coupling_rows != 0:
        raise ValueError("the consensus splitting covers games without coupling")
    N, n = spec.num_agents, spec.decision_dim
    nN = N * n
    P = np.kron(graph.adjacency() + np.eye(N), np.eye(n))
    L = np.kron(graph.laplacian(), np.eye(n))
    phi = np.zeros((2 * nN, 2 * nN))
    phi[:nN, :nN] = np.eye(nN) / alpha
    phi[:nN, nN:] = -0.5 * P
    phi[nN:, :nN] = -0.5 * P
    phi[nN:, nN:] = P
    skew = np.zeros((2 * nN, 2 * nN))
    skew[:nN, nN:] = 0.5 * P
    skew[nN:, :nN] = -0.5 * P
    extra = np.zeros((2 * nN, 2 * nN))
    extra[nN:, nN:] = L
    lo, hi = stacked_bounds(spec)
    cone = BoxSet(
        np.concatenate([lo, np.full(nN, -np.inf)]),
        np.concatenate([hi, np.full(nN, np.inf)]),
    )

    def forward(w: np.ndarray) -> np.ndarray:
        x, sig = w[:nN], w[nN:]
        top = extended_pseudo_gradient(x, sig, spec, convention=convention) - 0.5 * (P @ sig)
        return np.concatenate([top, 0.5 * (P @ x)])

    return ConsensusSplitting(
        forward=forward, skew=skew, extra_linear=extra, cone=cone, phi=phi
    )


# -- sampled constants ----------------------------------------------------------


@dataclass(frozen=True)
class SampledConstants:
    """Empirical monotonicity estimates from random pairs.

    ``eta_hat`` is the smallest sampled monotonicity quotient (an upper
    bound on the true modulus) and ``lip_hat`` the largest sampled
    Lipschitz quotient (a lower bound on the true constant).  The pair
    brackets nothing by itself; it bounds the true constants one-sidedly.
    """

    eta_hat: float
    lip_hat: float
    samples: int
    seed: int

    def as_monotonicity(self) -> Monotonicity:
        """Package the estimates; remember they are optimistic on both sides."""
        return Monotonicity(eta=self.eta_hat, lip_f=self.lip_hat)


def estimate_constants(
    spec: GameSpec, samples: int = 1000, seed: int = 0
) -> SampledConstants:
    """Sample gradient differences over the boxes and take extreme quotients.

    Requires bounded local sets.  Quadratic costs are evaluated through
    the same public gradient as any other cost, keeping the estimate an
    independent measurement.
    """
    if samples < 1:
        raise ValueError(f"samples={samples} must be at least 1")
    if not spec.all_sets_bounded():
        raise ValueError("sampled constants need bounded local sets")
    lo, hi = stacked_bounds(spec)
    rng = np.random.default_rng(seed)
    eta_hat = np.inf
    lip_hat = 0.0
    got = 0
    while got < samples:
        u = rng.uniform(lo, hi)
        w = rng.uniform(lo, hi)
        dx = u - w
        nrm2 = float(dx @ dx)
        if nrm2 <= 1e-24:
            continue
        df = pseudo_gradient(u, spec) - pseudo_gradient(w, spec)
        eta_hat = min(eta_hat, float(df @ dx) / nrm2)
        lip_hat = max(lip_hat, float(np.sqrt((df @ df) / nrm2)))
        got += 1
    return SampledConstants(
        eta_hat=float(eta_hat), lip_hat=float(lip_hat), samples=samples, seed=seed
    )


# -- fixed points vs zeros ------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    """Two-way agreement between zeros, fixed points, and the natural residual.

    ``fixed_point_gap`` is how far the certified equilibrium moves under
    one solver step; ``small_step_displacement`` and
    ``residual_at_small_step`` report the reverse direction: once the
    iteration moves less than a step-size-scaled fraction of the
    tolerance, its natural residual must be below the tolerance.
    """

    fixed_point_gap: float
    small_step_displacement: float
    residual_at_small_step: float
    tol: float
    ok: bool


def check_zer_fix_equivalence(
    spec: GameSpec,
    pre=None,
    tol: float = 1e-8,
    max_iters: int = 200_000,
) -> EquivalenceReport:
    """Certify that equilibria and update fixed points are the same set.

    Forward direction: the enumeration oracle's point moves by at most
    ``tol`` under one update.  Reverse direction: iterate until the plain
    displacement drops below ``tol / (10 C)`` and check that the natural
    residual there is below ``tol``.  ``C`` converts a step displacement
    into a unit-step residual bound: a scalar projection residual
    ``r(t) = |u - P(u - t g)|`` is non-decreasing in ``t`` while ``r(t)/t``
    is non-increasing, so ``r(1) <= max(1, 1/t) r(t)`` per coordinate, and
    the dual block picks up ``2 gamma ||A|| ||dx||`` from its reflected
    argument.  The factor of 10 is pure safety margin on top of that.
    """
    from .operators import eval_T_residual
    from .precond import default_preconditioner, operator_norm
    from .solvers import pfb_step

    if pre is None:
        pre = default_preconditioner(spec)
    star = oracle_vgne(spec)
    moved = pfb_step(star, spec, pre)
    gap = float(np.max(np.abs(moved.stacked - star.stacked)))

    from .game import default_start

    factor = max(1.0, 1.0 / float(np.min(pre.alpha_vector())))
    if spec.num_coupling_rows:
        nrm = operator_norm(spec.coupling.matrix())
        factor += max(1.0, 1.0 / pre.gamma) * (1.0 + 2.0 * pre.gamma * nrm)
    target = tol / (10.0 * factor)

    disp = np.inf
    point = default_start(spec)
    for _ in range(max_iters):
        nxt = pfb_step(point, spec, pre)
        disp = float(np.linalg.norm(nxt.stacked - point.stacked))
        point = nxt
        if disp <= target:
            break
    resid = eval_T_residual(point, spec)
    ok = gap <= tol and disp <= target and resid <= tol
    return EquivalenceReport(
        fixed_point_gap=gap,
        small_step_displacement=disp,
        residual_at_small_step=float(resid),
        tol=tol,
        ok=ok,
    )
