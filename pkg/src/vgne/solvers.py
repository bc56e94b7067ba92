"""Equilibrium-seeking iterations: forward-backward, asymmetric, consensus.

Three iterations are provided:

- :func:`pfb_solve`, the semi-decentralized projected-gradient iteration
  with a reflected multiplier update, run in the metric of a
  :class:`~vgne.precond.Preconditioner`;
- :func:`apa_solve`, the asymmetric one-step variant with a shared step;
  its explicit update formulas coincide with the forward-backward ones at
  equal steps, and the implementation routes through the very same code so
  the iterate sequences agree bit for bit;
- :func:`consensus_solve`, the fully distributed iteration for games
  without coupling constraints, where agents track the average through
  neighborhood mixing of auxiliary estimates.

Quadratic games without per-iteration instrumentation run on the selected
kernel backend; oracle costs and instrumented runs (recorded inclusion
checks, kept iterates) take the pure step path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as kern
from .errors import DivergenceError, StepSizeError, ConstantsUnavailableError
from .game import (
    GameSpec,
    PrimalDualPoint,
    QuadraticCost,
    aggregate,
    default_start,
    extended_pseudo_gradient,
    pseudo_gradient,
    resolve_constants,
    stacked_bounds,
)
from .network import CommGraph, mix
from .operators import eval_T_residual, project_box, project_nonneg, stacked_box
from .precond import (
    AsymmetricStepMatrix,
    Preconditioner,
    check_positive_definite,
    default_preconditioner,
    max_dual_step,
)

__all__ = [
    "SolverConfig",
    "SolverState",
    "ConsensusState",
    "TraceRow",
    "ConvergenceReport",
    "pfb_step",
    "pfb_solve",
    "apa_step",
    "apa_solve",
    "consensus_step",
    "consensus_solve",
]


@dataclass
class SolverConfig:
    """Iteration budget, tolerances, and instrumentation switches.

    ``residual_tol`` controls the stopping test on the metric-weighted
    fixed-point residual (plain Euclidean for the consensus iteration);
    ``kkt_tol`` is the acceptance threshold echoed in reports.  A trace row
    is recorded every ``trace_every`` iterations and at the final one.
    ``record_inclusion_checks`` verifies the design inclusion on every
    iterate pair at ``inclusion_tol`` (forcing the step path), and
    ``keep_iterates`` stores the whole iterate sequence in the report.
    """

    max_iters: int = 200_000
    residual_tol: float = 1e-8
    kkt_tol: float = 1e-6
    trace_every: int = 10
    record_inclusion_checks: bool = False
    keep_iterates: bool = False
    inclusion_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters={self.max_iters} must be at least 1")
        if self.trace_every < 1:
            raise ValueError(f"trace_every={self.trace_every} must be at least 1")
        if not (self.residual_tol > 0 and self.kkt_tol > 0):
            raise ValueError("tolerances must be positive")


class TraceRow(NamedTuple):
    iteration: int
    fp_residual_phi: float
    kkt_residual: float
    max_constraint_violation: float
    wall_ns: int


@dataclass
class SolverState:
    """Mutable progress of a primal-dual run."""

    point: PrimalDualPoint
    iteration: int = 0
    fp_residual: float = float("inf")


@dataclass(frozen=True)
class ConsensusState:
    """Decisions plus auxiliary aggregate-tracking estimates.

    The local estimate of the average that the gradient sees is not stored;
    it is recomputed as ``mix(v)`` whenever needed, so the pair ``(x, v)``
    is the whole state.
    """

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        v = np.asarray(self.v, dtype=float).copy()
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError(
                f"consensus state: expected matching 1-d shapes, received {x.shape} vs {v.shape}"
            )
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    def aggregate_estimates(self, graph: CommGraph, block_dim: int) -> np.ndarray:
        return mix(self.v, graph, block_dim)


@dataclass(frozen=True)
class ConvergenceReport:
    """What a solve did: status, counters, trace, and the resolved settings.

    ``trace`` rows carry ``(iteration, fp_residual_phi, kkt_residual,
    max_constraint_violation, wall_ns)``.  ``iterates`` is filled only when
    the config asked for it; ``inclusion_failures`` lists iterations whose
    design-inclusion check failed (empty tuple = checked and clean, None =
    not checked).  ``estimate_disagreement`` holds per-agent distances
    between the final aggregate estimates and the true average, consensus
    runs only.
    """

    algorithm: str
    converged: bool
    iterations: int
    final_fp_residual: float
    final_kkt_residual: float
    trace: tuple
    settings: dict
    iterates: tuple | None = None
    inclusion_failures: tuple | None = None
    estimate_disagreement: np.ndarray | None = None


# -- primal-dual iterations ----------------------------------------------------


def pfb_step(
    point: PrimalDualPoint, spec: GameSpec, pre: Preconditioner
) -> PrimalDualPoint:
    """One forward-backward update in the preconditioned metric.

    The primal block takes a projected gradient step at the current
    multiplier; the dual block then ascends on the reflected constraint
    value ``2 A x+ - A x - b`` and projects onto the orthant.  The
    sequential order is what makes the preconditioned resolvent explicit.
    """
    A = spec.coupling.matrix()
    g = pseudo_gradient(point.x, spec)
    if A.shape[0]:
        g = g + A.T @ point.lam
    xn = project_box(point.x - pre.alpha_vector() * g, stacked_box(spec))
    if A.shape[0]:
        r = A @ (2.0 * xn - point.x) - spec.coupling.b
        ln = project_nonneg(point.lam + pre.gamma * r)
    else:
        ln = point.lam
    return PrimalDualPoint(x=xn, lam=ln)


def apa_step(
    point: PrimalDualPoint, spec: GameSpec, step_matrix: AsymmetricStepMatrix
) -> PrimalDualPoint:
    """One asymmetric projection update with shared step ``tau``.

    The lower-triangular one-step matrix makes the resolvent explicit and
    sequential; written out, the formulas are exactly those of
    :func:`pfb_step` with all steps equal to ``tau``, so this delegates to
    the same code path and produces bitwise-identical iterates.
    """
    return pfb_step(point, spec, step_matrix.as_preconditioner())


def _validate_primal_dual_steps(spec: GameSpec, pre: Preconditioner, unsafe: bool):
    """Enforce the metric and step-size admissibility unless overridden."""
    if unsafe:
        return
    pd = check_positive_definite(pre)
    if not pd.sufficient_condition:
        raise StepSizeError(
            "steps violate the metric positive-definiteness condition "
            "gamma < 1/(||A||^2 max alpha); pass unsafe=True to run anyway"
        )
    try:
        constants = resolve_constants(spec)
    except ConstantsUnavailableError:
        return
    cap = 2.0 * constants.eta / constants.lip_f**2
    amax = float(np.max(pre.alphas))
    if amax >= cap:
        raise StepSizeError(
            f"max primal step {amax} reaches the cocoercivity cap {cap}; "
            "pass unsafe=True to run anyway"
        )
    gmax = max_dual_step(pre.alphas, constants, pre.coupling_norm)
    if not np.isinf(gmax) and pre.gamma >= gmax:
        raise StepSizeError(
            f"dual step {pre.gamma} reaches the admissible maximum {gmax}; "
            "pass unsafe=True to run anyway"
        )


def _prepared_start(spec: GameSpec, start: PrimalDualPoint | None) -> PrimalDualPoint:
    if start is None:
        return default_start(spec)
    x = np.asarray(start.x, dtype=float)
    if x.shape != (spec.dim,):
        raise ValueError(f"start decision: expected shape ({spec.dim},), received {x.shape}")
    if start.lam.shape != (spec.num_coupling_rows,):
        raise ValueError(
            f"start multiplier: expected {spec.num_coupling_rows} components, "
            f"received {start.lam.shape[0]}"
        )
    # feasible starts only: clamp into the box and the orthant
    return PrimalDualPoint(
        x=project_box(x, stacked_box(spec)), lam=project_nonneg(start.lam)
    )


def _constraint_violation(spec: GameSpec, x: np.ndarray) -> float:
    if spec.num_coupling_rows == 0:
        return 0.0
    return float(
        max(np.max(spec.coupling.matrix() @ x - spec.coupling.b), 0.0)
    )


def _settings_echo(config: SolverConfig, **extra) -> dict:
    out = {
        "max_iters": config.max_iters,
        "residual_tol": config.residual_tol,
        "kkt_tol": config.kkt_tol,
        "trace_every": config.trace_every,
        "backend": kern.BACKEND,
    }
    out.update(extra)
    return out


def pfb_solve(
    spec: GameSpec,
    pre: Preconditioner | None = None,
    config: SolverConfig | None = None,
    start: PrimalDualPoint | None = None,
    *,
    unsafe: bool = False,
    _algorithm: str = "pfb",
) -> tuple[PrimalDualPoint, ConvergenceReport]:
    """Run the preconditioned forward-backward iteration to tolerance.

    Returns the final point and a report.  The metric defaults to
    :func:`~vgne.precond.default_preconditioner`; steps are validated
    against the positive-definiteness condition and, when monotonicity
    constants are available, the convergence bounds (``unsafe=True`` skips
    both).  Local sets must be bounded.  A non-finite iterate raises
    :class:`~vgne.errors.DivergenceError` with the iteration index.
    """
    config = config if config is not None else SolverConfig()
    if not spec.all_sets_bounded():
        raise ValueError("all local sets must be bounded to launch a solve")
    if pre is None:
        pre = default_preconditioner(spec)
    if pre.num_agents != spec.num_agents or pre.decision_dim != spec.decision_dim:
        raise ValueError("preconditioner shape does not match the game")
    _validate_primal_dual_steps(spec, pre, unsafe)
    point = _prepared_start(spec, start)

    fast = isinstance(spec.cost, QuadraticCost) and not (
        config.record_inclusion_checks or config.keep_iterates
    )
    t0 = time.perf_counter_ns()
    trace: list[TraceRow] = []
    settings = _settings_echo(
        config,
        algorithm=_algorithm,
        alphas=[float(a) for a in pre.alphas],
        gamma=float(pre.gamma),
        path="kernel" if fast else "step",
    )

    if fast:
        point, converged, iterations, res = _pfb_kernel_loop(
            spec, pre, config, point, trace, t0
        )
        iterates = None
        failures = None
    else:
        point, converged, iterations, res, iterates, failures = _pfb_step_loop(
            spec, pre, config, point, trace, t0
        )

    kkt = eval_T_residual(point, spec)
    report = ConvergenceReport(
        algorithm=_algorithm,
        converged=converged,
        iterations=iterations,
        final_fp_residual=res,
        final_kkt_residual=kkt,
        trace=tuple(trace),
        settings=settings,
        iterates=iterates,
        inclusion_failures=failures,
    )
    return point, report


def _pfb_kernel_loop(spec, pre, config, point, trace, t0):
    cost = spec.cost
    A = np.ascontiguousarray(spec.coupling.matrix())
    b = spec.coupling.b.copy()
    lo, hi = stacked_bounds(spec)
    x = np.array(point.x, dtype=float)
    lam = np.array(point.lam, dtype=float)
    args = (
        cost.q.copy(),
        np.ascontiguousarray(cost.c),
        np.ascontiguousarray(cost.d),
        A,
        b,
        pre.alpha_vector(),
        float(pre.gamma),
        lo.copy(),
        hi.copy(),
    )
    done = 0
    res = float("inf")
    converged = False
    while done < config.max_iters:
        todo = min(config.trace_every, config.max_iters - done)
        steps, res, status = kern.pfb_run(x, lam, *args, todo, config.residual_tol)
        done += steps
        if status == kern.STATUS_NONFINITE:
            raise DivergenceError(
                f"iterate became non-finite at iteration {done}", iteration=done
            )
        cur = PrimalDualPoint(x=x, lam=lam)
        trace.append(
            TraceRow(
                iteration=done,
                fp_residual_phi=float(res),
                kkt_residual=eval_T_residual(cur, spec),
                max_constraint_violation=_constraint_violation(spec, x),
                wall_ns=time.perf_counter_ns() - t0,
            )
        )
        if status == kern.STATUS_CONVERGED:
            converged = True
            break
    return PrimalDualPoint(x=x, lam=lam), converged, done, float(res)


def _pfb_step_loop(spec, pre, config, point, trace, t0):
    from .verification import check_fb_inclusion  # local import, avoids a cycle
    from .operators import split_operators

    pair = split_operators(spec) if config.record_inclusion_checks else None
    phi = pre.dense() if config.record_inclusion_checks else None
    iterates = [point] if config.keep_iterates else None
    failures: list[int] = []
    res = float("inf")
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        nxt = pfb_step(point, spec, pre)
        dx = nxt.x - point.x
        dl = nxt.lam - point.lam
        res = pre.weighted_norm(dx, dl)
        if not (np.isfinite(res) and np.all(np.isfinite(nxt.lam))):
            raise DivergenceError(
                f"iterate became non-finite at iteration {it}", iteration=it
            )
        if config.record_inclusion_checks:
            ok = check_fb_inclusion(
                point.stacked,
                nxt.stacked,
                pair.forward(point.stacked),
                pair.skew,
                pair.cone,
                phi,
                tol=config.inclusion_tol,
            )
            if not ok:
                failures.append(it)
        if config.keep_iterates:
            iterates.append(nxt)
        point = nxt
        if it % config.trace_every == 0 or res <= config.residual_tol:
            trace.append(
                TraceRow(
                    iteration=it,
                    fp_residual_phi=float(res),
                    kkt_residual=eval_T_residual(point, spec),
                    max_constraint_violation=_constraint_violation(spec, point.x),
                    wall_ns=time.perf_counter_ns() - t0,
                )
            )
        if res <= config.residual_tol:
            converged = True
            break
    if not converged and (not trace or trace[-1].iteration != it):
        trace.append(
            TraceRow(
                iteration=it,
                fp_residual_phi=float(res),
                kkt_residual=eval_T_residual(point, spec),
                max_constraint_violation=_constraint_violation(spec, point.x),
                wall_ns=time.perf_counter_ns() - t0,
            )
        )
    return (
        point,
        converged,
        it,
        float(res),
        tuple(iterates) if iterates is not None else None,
        tuple(failures) if config.record_inclusion_checks else None,
    )


def apa_solve(
    spec: GameSpec,
    tau: float | None = None,
    config: SolverConfig | None = None,
    start: PrimalDualPoint | None = None,
    *,
    unsafe: bool = False,
) -> tuple[PrimalDualPoint, ConvergenceReport]:
    """Run the asymmetric one-step iteration with shared step ``tau``.

    ``tau`` defaults to the equal-step policy of
    :func:`~vgne.precond.equal_step_size`.  Everything else, including the
    produced iterates, matches :func:`pfb_solve` with all steps equal to
    ``tau``; only the report label differs.
    """
    from .precond import equal_step_size

    if tau is None:
        tau = equal_step_size(spec)
    step_matrix = AsymmetricStepMatrix(tau=float(tau), coupling=spec.coupling)
    return pfb_solve(
        spec,
        pre=step_matrix.as_preconditioner(),
        config=config,
        start=start,
        unsafe=unsafe,
        _algorithm="apa",
    )


# -- distributed consensus iteration -------------------------------------------


def consensus_step(
    state: ConsensusState,
    spec: GameSpec,
    graph: CommGraph,
    alpha: float,
    convention: str = "total_at_estimate",
) -> ConsensusState:
    """One distributed update: mix estimates, step the decisions, re-track.

    Each agent mixes the auxiliary estimates over its closed neighborhood,
    takes a projected gradient step against the gradient evaluated at its
    own mixed estimate, and then shifts the estimate by its decision change
    so the network keeps tracking the average.
    """
    n = spec.decision_dim
    sig = mix(state.v, graph, n)
    g = extended_pseudo_gradient(state.x, sig, spec, convention=convention)
    xn = project_box(state.x - alpha * g, stacked_box(spec))
    vn = sig + xn - state.x
    return ConsensusState(x=xn, v=vn)


def consensus_solve(
    spec: GameSpec,
    graph: CommGraph,
    alpha: float | None = None,
    config: SolverConfig | None = None,
    start: ConsensusState | None = None,
    *,
    convention: str = "total_at_estimate",
    unsafe: bool = False,
) -> tuple[PrimalDualPoint, ConvergenceReport]:
    """Run the distributed iteration on a game without coupling constraints.

    ``alpha`` defaults to a conservative fraction of the cocoercivity cap.
    The stopping test uses the plain Euclidean residual on ``col(x, v)``.
    The default gradient convention substitutes the local estimate into the
    full own-gradient, so the limit agrees with the centralized solution;
    the report carries the final per-agent estimate disagreement.
    Convergence certificates assume a connected regular graph; the solve
    runs on any connected graph.
    """
    config = config if config is not None else SolverConfig()
    if spec.num_coupling_rows != 0:
        raise ValueError(
            "the consensus iteration handles games without coupling constraints; "
            "use pfb_solve or apa_solve for coupled games"
        )
    if graph.num_nodes != spec.num_agents:
        raise ValueError(
            f"graph has {graph.num_nodes} nodes but the game has {spec.num_agents} agents"
        )
    if not graph.is_connected():
        raise ValueError("the communication graph must be connected")
    if not spec.all_sets_bounded():
        raise ValueError("all local sets must be bounded to launch a solve")
    if alpha is None:
        constants = resolve_constants(spec)
        alpha = 0.2 * constants.eta / constants.lip_f**2
    if not alpha > 0:
        raise StepSizeError(f"step alpha={alpha} must be positive")
    if not unsafe:
        try:
            constants = resolve_constants(spec)
        except ConstantsUnavailableError:
            constants = None
        if constants is not None and alpha >= 2.0 * constants.eta / constants.lip_f**2:
            raise StepSizeError(
                f"step alpha={alpha} reaches the cocoercivity cap; pass unsafe=True"
            )

    if start is None:
        x0 = default_start(spec).x
        state = ConsensusState(x=x0, v=x0)
    else:
        if start.x.shape != (spec.dim,):
            raise ValueError(
                f"start: expected stacked shape ({spec.dim},), received {start.x.shape}"
            )
        state = ConsensusState(x=project_box(start.x, stacked_box(spec)), v=start.v)

    fast = isinstance(spec.cost, QuadraticCost) and not (
        config.record_inclusion_checks or config.keep_iterates
    )
    t0 = time.perf_counter_ns()
    trace: list[TraceRow] = []
    settings = _settings_echo(
        config,
        algorithm="kns",
        alpha=float(alpha),
        convention=convention,
        graph_nodes=graph.num_nodes,
        graph_edges=graph.num_edges,
        path="kernel" if fast else "step",
    )

    if fast:
        state, converged, iterations, res = _consensus_kernel_loop(
            spec, graph, float(alpha), convention, config, state, trace, t0
        )
        iterates = None
        failures = None
    else:
        state, converged, iterations, res, iterates, failures = _consensus_step_loop(
            spec, graph, float(alpha), convention, config, state, trace, t0
        )

    point = PrimalDualPoint(x=state.x, lam=np.zeros(0))
    sig = state.aggregate_estimates(graph, spec.decision_dim)
    true_agg = aggregate(state.x, spec)
    disagreement = np.linalg.norm(
        sig.reshape(spec.num_agents, spec.decision_dim) - true_agg[None, :], axis=1
    )
    report = ConvergenceReport(
        algorithm="kns",
        converged=converged,
        iterations=iterations,
        final_fp_residual=res,
        final_kkt_residual=eval_T_residual(point, spec),
        trace=tuple(trace),
        settings=settings,
        iterates=iterates,
        inclusion_failures=failures,
        estimate_disagreement=disagreement,
    )
    return point, report


def _consensus_kernel_loop(spec, graph, alpha, convention, config, state, trace, t0):
    cost = spec.cost
    lo, hi = stacked_bounds(spec)
    indptr, indices, inv_sizes = graph.closed_csr()
    x = np.array(state.x, dtype=float)
    v = np.array(state.v, dtype=float)
    chain = convention == "total_at_estimate"
    args = (
        cost.q.copy(),
        np.ascontiguousarray(cost.c),
        np.ascontiguousarray(cost.d),
        alpha,
        lo.copy(),
        hi.copy(),
        indptr,
        indices,
        inv_sizes,
        chain,
    )
    done = 0
    res = float("inf")
    converged = False
    while done < config.max_iters:
        todo = min(config.trace_every, config.max_iters - done)
        steps, res, status = kern.consensus_run(x, v, *args, todo, config.residual_tol)
        done += steps
        if status == kern.STATUS_NONFINITE:
            raise DivergenceError(
                f"iterate became non-finite at iteration {done}", iteration=done
            )
        cur = PrimalDualPoint(x=x, lam=np.zeros(0))
        trace.append(
            TraceRow(
                iteration=done,
                fp_residual_phi=float(res),
                kkt_residual=eval_T_residual(cur, spec),
                max_constraint_violation=0.0,
                wall_ns=time.perf_counter_ns() - t0,
            )
        )
        if status == kern.STATUS_CONVERGED:
            converged = True
            break
    return ConsensusState(x=x, v=v), converged, done, float(res)


def _consensus_step_loop(spec, graph, alpha, convention, config, state, trace, t0):
    from .verification import consensus_splitting, check_fb_inclusion

    pieces = (
        consensus_splitting(spec, graph, alpha, convention=convention)
        if config.record_inclusion_checks
        else None
    )
    n = spec.decision_dim
    iterates = [state] if config.keep_iterates else None
    failures: list[int] = []
    res = float("inf")
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        nxt = consensus_step(state, spec, graph, alpha, convention=convention)
        dx = nxt.x - state.x
        dv = nxt.v - state.v
        res = float(np.sqrt(dx @ dx + dv @ dv))
        if not np.isfinite(res):
            raise DivergenceError(
                f"iterate became non-finite at iteration {it}", iteration=it
            )
        if pieces is not None:
            w0 = np.concatenate([state.x, mix(state.v, graph, n)])
            w1 = np.concatenate([nxt.x, mix(nxt.v, graph, n)])
            ok = check_fb_inclusion(
                w0,
                w1,
                pieces.forward(w0),
                pieces.skew,
                pieces.cone,
                pieces.phi,
                tol=config.inclusion_tol,
                extra_linear=pieces.extra_linear,
            )
            if not ok:
                failures.append(it)
        if config.keep_iterates:
            iterates.append(nxt)
        state = nxt
        if it % config.trace_every == 0 or res <= config.residual_tol:
            cur = PrimalDualPoint(x=state.x, lam=np.zeros(0))
            trace.append(
                TraceRow(
                    iteration=it,
                    fp_residual_phi=float(res),
                    kkt_residual=eval_T_residual(cur, spec),
                    max_constraint_violation=0.0,
                    wall_ns=time.perf_counter_ns() - t0,
                )
            )
        if res <= config.residual_tol:
            converged = True
            break
    if not converged and (not trace or trace[-1].iteration != it):
        cur = PrimalDualPoint(x=state.x, lam=np.zeros(0))
        trace.append(
            TraceRow(
                iteration=it,
                fp_residual_phi=float(res),
                kkt_residual=eval_T_residual(cur, spec),
                max_constraint_violation=0.0,
                wall_ns=time.perf_counter_ns() - t0,
            )
        )
    return (
        state,
        converged,
        it,
        float(res),
        tuple(iterates) if iterates is not None else None,
        tuple(failures) if config.record_inclusion_checks else None,
    )
