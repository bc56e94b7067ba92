"""Command-line interface.

Subcommands: ``solve`` runs one algorithm on a spec file, ``bounds``
prints the step-size region and contraction constants, ``verify`` runs
the certification checks, ``gen`` writes a random game, and ``bench``
executes an experiment manifest.  Exit codes: 0 success (or convergence),
2 iteration budget exhausted without convergence, 1 any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import VgneError
from .game import GameSpec, PrimalDualPoint, resolve_constants
from .generate import random_game, random_point_in_box
from .network import build_graph
from .precond import (
    averagedness_constant,
    build_preconditioner,
    check_positive_definite,
    cocoercivity_constant,
    convergent_steps,
    equal_step_bound,
    equal_step_size,
    max_dual_step,
    operator_norm,
)
from .solvers import ConsensusState, SolverConfig, apa_solve, consensus_solve, pfb_solve
from .specio import load_graph, load_manifest, load_spec, write_spec, write_trace_csv
from .verification import (
    check_kkt,
    check_zer_fix_equivalence,
    estimate_constants,
    oracle_vgne,
)

log = logging.getLogger("vgne")


def _out_path(args, p):
    p = Path(p)
    if not p.is_absolute() and args.output_dir:
        return Path(args.output_dir) / p
    return p


def _load_solve_graph(args, spec: GameSpec):
    if args.graph is None:
        raise VgneError("the kns algorithm needs --graph (a file or a topology name)")
    if args.graph in ("complete", "cycle", "path", "random_regular"):
        return build_graph(
            args.graph, spec.num_agents, degree=args.graph_degree, seed=args.graph_seed
        )
    return load_graph(args.graph)


def _solve_config(args) -> SolverConfig:
    cfg = SolverConfig()
    if args.tol is not None:
        cfg.residual_tol = args.tol
    if args.max_iters is not None:
        cfg.max_iters = args.max_iters
    if args.trace_every is not None:
        cfg.trace_every = args.trace_every
    return cfg


def _cmd_solve(args) -> int:
    spec = load_spec(args.spec)
    cfg = _solve_config(args)
    start = None
    if args.seed is not None:
        x0 = random_point_in_box(spec, args.seed)
        start = PrimalDualPoint(x=x0, lam=np.zeros(spec.num_coupling_rows))

    if args.algorithm == "kns":
        graph = _load_solve_graph(args, spec)
        cstart = None if start is None else ConsensusState(x=start.x, v=start.x)
        point, report = consensus_solve(
            spec, graph, alpha=args.alpha[0] if args.alpha else None,
            config=cfg, start=cstart, unsafe=args.unsafe,
        )
    elif args.algorithm == "apa":
        tau = args.tau if args.tau is not None else None
        point, report = apa_solve(spec, tau=tau, config=cfg, start=start, unsafe=args.unsafe)
    else:
        if args.equal_steps:
            tau = args.tau if args.tau is not None else equal_step_size(spec, safety=args.safety)
            pre = build_preconditioner(tau, tau, spec.coupling)
        elif args.alpha or args.gamma is not None:
            if not args.alpha or args.gamma is None:
                raise VgneError("explicit steps need both --alpha and --gamma")
            alphas = np.asarray(args.alpha, dtype=float)
            if alphas.size == 1:
                alphas = np.full(spec.num_agents, alphas[0])
            pre = build_preconditioner(alphas, args.gamma, spec.coupling)
        else:
            alphas, gamma = convergent_steps(spec, gamma_safety=args.safety)
            pre = build_preconditioner(alphas, gamma, spec.coupling)
        point, report = pfb_solve(spec, pre=pre, config=cfg, start=start, unsafe=args.unsafe)

    if args.trace:
        path = _out_path(args, args.trace)
        write_trace_csv(path, report.trace)
        log.info("trace written to %s", path)

    print(f"algorithm = {report.algorithm}")
    print(f"converged = {report.converged}")
    print(f"iterations = {report.iterations}")
    print(f"fp_residual = {report.final_fp_residual:.6e}")
    print(f"kkt_residual = {report.final_kkt_residual:.6e}")
    if report.estimate_disagreement is not None:
        print(f"max_estimate_disagreement = {np.max(report.estimate_disagreement):.6e}")
    return 0 if report.converged else 2


def _cmd_bounds(args) -> int:
    spec = load_spec(args.spec)
    constants = resolve_constants(spec)
    nrm = operator_norm(spec.coupling.matrix())
    cap = 2.0 * constants.eta / constants.lip_f**2
    if args.equal_steps:
        tau = args.tau if args.tau is not None else equal_step_size(spec, safety=args.safety)
        alphas = np.full(spec.num_agents, tau)
        gamma = tau
    elif args.alpha:
        alphas = np.asarray(args.alpha, dtype=float)
        if alphas.size == 1:
            alphas = np.full(spec.num_agents, alphas[0])
        gamma = args.gamma if args.gamma is not None else None
    else:
        alphas, gamma = convergent_steps(spec, gamma_safety=args.safety)

    print(f"eta = {constants.eta:.17g}")
    print(f"lip_f = {constants.lip_f:.17g}")
    print(f"coupling_norm = {nrm:.17g}")
    print(f"alpha_cap = {cap:.17g}")
    print(f"alpha_max = {np.max(alphas):.17g}")
    gmax = max_dual_step(alphas, constants, nrm)
    print(f"gamma_max = {gmax:.17g}")
    print(f"equal_step_bound = {equal_step_bound(constants, nrm):.17g}")
    if gamma is None:
        gamma = 0.99 * gmax if np.isfinite(gmax) else 1.0
    print(f"gamma = {gamma:.17g}")
    pre = build_preconditioner(alphas, gamma, spec.coupling)
    pd = check_positive_definite(pre)
    print(f"sufficient_pd = {pd.sufficient_condition}")
    print(f"cholesky_pd = {pd.definite}")
    beta = cocoercivity_constant(pre, constants)
    print(f"beta = {beta:.17g}")
    if beta > 0.5:
        print(f"theta = {averagedness_constant(beta):.17g}")
    else:
        print("theta = n/a (beta <= 1/2)")
    return 0


def _cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    checks = ("kkt", "inclusion", "constants", "equivalence") if args.check == "all" else (args.check,)
    all_ok = True
    for name in checks:
        try:
            if name == "kkt":
                star = oracle_vgne(spec)
                report = check_kkt(star, spec, tol=args.tol)
                ok = report.passes()
                detail = f"max_stationarity={report.max_stationarity:.3e}"
            elif name == "inclusion":
                # run a bounded number of iterations, auditing every pair
                cfg = SolverConfig(
                    max_iters=args.samples,
                    record_inclusion_checks=True,
                    inclusion_tol=args.tol,
                    residual_tol=1e-300,
                )
                _, report = pfb_solve(spec, config=cfg)
                ok = report.inclusion_failures == ()
                detail = f"checked={report.iterations} failures={len(report.inclusion_failures)}"
            elif name == "constants":
                sampled = estimate_constants(spec, samples=args.samples, seed=args.seed)
                exact = resolve_constants(spec)
                ok = (
                    sampled.eta_hat >= exact.eta - 1e-9
                    and sampled.lip_hat <= exact.lip_f + 1e-9
                )
                detail = (
                    f"eta_hat={sampled.eta_hat:.6g} (eta={exact.eta:.6g}) "
                    f"lip_hat={sampled.lip_hat:.6g} (lip_f={exact.lip_f:.6g})"
                )
            else:
                eq = check_zer_fix_equivalence(spec, tol=args.tol)
                ok = eq.ok
                detail = (
                    f"fixed_point_gap={eq.fixed_point_gap:.3e} "
                    f"residual={eq.residual_at_small_step:.3e}"
                )
        except Exception as exc:
            ok = False
            detail = f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        print(f"check={name} status={'pass' if ok else 'fail'} {detail}")
    return 0 if all_ok else 1


def _cmd_gen(args) -> int:
    spec = random_game(args.agents, args.dim, args.constraints, args.seed)
    path = _out_path(args, args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_spec(spec, path)
    print(f"wrote {path}")
    return 0


def _cmd_bench(args) -> int:
    from .runner import run_experiments

    manifest = load_manifest(args.manifest)
    summaries = run_experiments(manifest, output_dir=args.output_dir)
    ok = True
    for s in summaries:
        status = "converged" if s.get("converged") else (s.get("error") or "not converged")
        print(f"entry={s['name']} algorithm={s['algorithm']} status={status}")
        ok &= bool(s.get("converged"))
    return 0 if ok else 2


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vgne",
        description="Equilibrium seeking for average-aggregative games "
        "with affine coupling constraints.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="verbosity of diagnostic logging",
    )
    p.add_argument("--output-dir", default=None, help="directory for written artifacts")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one algorithm on a game spec")
    ps.add_argument("--spec", required=True)
    ps.add_argument("--algorithm", default="pfb", choices=["pfb", "apa", "kns"])
    ps.add_argument("--graph", default=None, help="graph file, or topology name for kns")
    ps.add_argument("--graph-degree", type=int, default=None)
    ps.add_argument("--graph-seed", type=int, default=None)
    ps.add_argument("--tol", type=float, default=None, help="fixed-point residual tolerance")
    ps.add_argument("--max-iters", type=int, default=None)
    ps.add_argument("--trace", default=None, help="write the iteration trace CSV here")
    ps.add_argument("--trace-every", type=int, default=None)
    ps.add_argument("--alpha", type=float, action="append", default=None,
                    help="explicit primal step (repeat for per-agent values)")
    ps.add_argument("--gamma", type=float, default=None, help="explicit dual step")
    ps.add_argument("--tau", type=float, default=None, help="shared step for apa/equal-steps")
    ps.add_argument("--safety", type=float, default=0.99, help="fraction of the step bounds")
    ps.add_argument("--equal-steps", action="store_true", help="use the shared-step policy")
    ps.add_argument("--seed", type=int, default=None, help="random feasible start")
    ps.add_argument("--unsafe", action="store_true", help="skip step admissibility checks")
    ps.set_defaults(func=_cmd_solve)

    pb = sub.add_parser("bounds", help="print step bounds and contraction constants")
    pb.add_argument("--spec", required=True)
    pb.add_argument("--alpha", type=float, action="append", default=None)
    pb.add_argument("--gamma", type=float, default=None)
    pb.add_argument("--tau", type=float, default=None)
    pb.add_argument("--safety", type=float, default=0.99)
    pb.add_argument("--equal-steps", action="store_true")
    pb.set_defaults(func=_cmd_bounds)

    pv = sub.add_parser("verify", help="run certification checks on a spec")
    pv.add_argument("--spec", required=True)
    pv.add_argument("--check", default="all",
                    choices=["kkt", "inclusion", "constants", "equivalence", "all"])
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--samples", type=int, default=1000)
    pv.add_argument("--tol", type=float, default=1e-8)
    pv.set_defaults(func=_cmd_verify)

    pg = sub.add_parser("gen", help="write a random strongly monotone game")
    pg.add_argument("--agents", type=int, required=True)
    pg.add_argument("--dim", type=int, required=True)
    pg.add_argument("--constraints", type=int, required=True)
    pg.add_argument("--seed", type=int, required=True)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=_cmd_gen)

    pm = sub.add_parser("bench", help="execute an experiment manifest")
    pm.add_argument("--manifest", required=True)
    pm.set_defaults(func=_cmd_bench)

    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (VgneError, OSError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # anything else is still an error exit, but loud
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
