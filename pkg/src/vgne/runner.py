"""Manifest execution: run every entry, write traces, summarize.

Entries run sequentially in manifest order so repeated runs of the same
manifest are reproducible.  A failing entry (bad file, divergence, step
rejection) is recorded in the summary and the run continues.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import yaml

from .errors import SpecFormatError
from .game import PrimalDualPoint, resolve_constants
from .generate import random_point_in_box
from .network import build_graph
from .precond import (
    averagedness_constant,
    build_preconditioner,
    check_positive_definite,
    cocoercivity_constant,
    convergent_steps,
    equal_step_size,
    max_dual_step,
    operator_norm,
)
from .solvers import SolverConfig, apa_solve, consensus_solve, pfb_solve
from .specio import ExperimentManifest, load_graph, load_spec, write_trace_csv

__all__ = ["run_experiments"]

log = logging.getLogger(__name__)


def _entry_config(entry) -> SolverConfig:
    cfg = SolverConfig()
    if entry.tol is not None:
        cfg.residual_tol = float(entry.tol)
    if entry.max_iters is not None:
        cfg.max_iters = int(entry.max_iters)
    if entry.trace_every is not None:
        cfg.trace_every = int(entry.trace_every)
    return cfg


def _bounds_info(spec, alphas, gamma) -> dict:
    constants = resolve_constants(spec)
    nrm = operator_norm(spec.coupling.matrix())
    pre = build_preconditioner(alphas, gamma, spec.coupling)
    beta = float(cocoercivity_constant(pre, constants))
    out = {
        "coupling_norm": float(nrm),
        "eta": float(constants.eta),
        "lip_f": float(constants.lip_f),
        "beta": beta,
        "theta": float(averagedness_constant(beta)) if beta > 0.5 else None,
    }
    try:
        out["gamma_max"] = float(max_dual_step(alphas, constants, nrm))
    except Exception:
        out["gamma_max"] = float("nan")
    return out


def _run_entry(entry, base: Path, output_dir: Path) -> dict:
    spec = load_spec(base / entry.spec)
    cfg = _entry_config(entry)
    summary: dict = {
        "name": entry.name,
        "algorithm": entry.algorithm,
        "policy": entry.policy,
        "error": None,
    }

    start = None
    if entry.seed is not None and entry.algorithm in ("pfb", "apa"):
        x0 = random_point_in_box(spec, entry.seed)
        start = PrimalDualPoint(x=x0, lam=np.zeros(spec.num_coupling_rows))

    if entry.algorithm in ("pfb", "apa"):
        unsafe = entry.policy == "explicit"
        if entry.algorithm == "apa" or entry.policy == "equal":
            if entry.policy == "explicit" and entry.tau is not None:
                tau = float(entry.tau)
            else:
                tau = equal_step_size(spec)
            if entry.algorithm == "apa":
                point, report = apa_solve(spec, tau=tau, config=cfg, start=start, unsafe=unsafe)
                alphas = np.full(spec.num_agents, tau)
                gamma = tau
            else:
                alphas = np.full(spec.num_agents, tau)
                gamma = tau
                pre = build_preconditioner(alphas, gamma, spec.coupling)
                point, report = pfb_solve(spec, pre=pre, config=cfg, start=start, unsafe=unsafe)
        else:
            if entry.policy == "explicit":
                if entry.alpha is None or entry.gamma is None:
                    raise SpecFormatError(
                        f"entry {entry.name!r}: explicit policy needs alpha and gamma"
                    )
                alphas = np.asarray(entry.alpha, dtype=float)
                if alphas.size == 1:
                    alphas = np.full(spec.num_agents, float(alphas[0]))
                gamma = float(entry.gamma)
            else:
                alphas, gamma = convergent_steps(spec)
            pre = build_preconditioner(alphas, gamma, spec.coupling)
            point, report = pfb_solve(spec, pre=pre, config=cfg, start=start, unsafe=unsafe)
        try:
            summary["bounds"] = _bounds_info(spec, alphas, gamma)
            summary["bounds"]["sufficient_pd"] = bool(
                check_positive_definite(
                    build_preconditioner(alphas, gamma, spec.coupling)
                ).sufficient_condition
            )
        except Exception as exc:  # bounds are informational, never fatal
            summary["bounds"] = {"error": str(exc)}
    elif entry.algorithm == "kns":
        if entry.graph is not None:
            graph = load_graph(base / entry.graph)
        elif entry.graph_kind is not None:
            graph = build_graph(
                entry.graph_kind,
                spec.num_agents,
                degree=entry.graph_degree,
                seed=entry.graph_seed,
            )
        else:
            raise SpecFormatError(f"entry {entry.name!r}: the kns algorithm needs a graph")
        alpha = None if entry.alpha is None else float(entry.alpha[0])
        from .solvers import ConsensusState

        cstart = None
        if entry.seed is not None:
            x0 = random_point_in_box(spec, entry.seed)
            cstart = ConsensusState(x=x0, v=x0)
        point, report = consensus_solve(
            spec,
            graph,
            alpha=alpha,
            config=cfg,
            start=cstart,
            unsafe=entry.policy == "explicit",
        )
    else:  # pragma: no cover - manifest validation rejects this earlier
        raise SpecFormatError(f"entry {entry.name!r}: unknown algorithm")

    trace_path = output_dir / entry.trace
    write_trace_csv(trace_path, report.trace)
    summary.update(
        converged=bool(report.converged),
        iterations=int(report.iterations),
        final_fp_residual=float(report.final_fp_residual),
        final_kkt_residual=float(report.final_kkt_residual),
        trace=str(trace_path),
    )
    return summary


def run_experiments(
    manifest: ExperimentManifest,
    output_dir=None,
) -> list[dict]:
    """Execute all entries; returns one summary dict per entry.

    Trace CSVs land under ``output_dir`` (default: the manifest directory)
    at each entry's ``trace`` path; a ``summary.yaml`` with all entry
    outcomes is written next to them.  Entries run in order; failures are
    captured per entry.  Entries are independent, so a caller could shard
    them across processes, but this runner stays sequential for
    reproducibility.
    """
    base = Path(manifest.base_dir)
    out = Path(output_dir) if output_dir is not None else base
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for entry in manifest.entries:
        log.info("running entry %s (%s)", entry.name, entry.algorithm)
        try:
            summaries.append(_run_entry(entry, base, out))
        except Exception as exc:
            log.warning("entry %s failed: %s", entry.name, exc)
            summaries.append(
                {
                    "name": entry.name,
                    "algorithm": entry.algorithm,
                    "policy": entry.policy,
                    "converged": False,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
    with open(out / "summary.yaml", "w") as fh:
        yaml.safe_dump({"entries": summaries}, fh, sort_keys=False)
    return summaries
