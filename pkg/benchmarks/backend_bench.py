"""Compare the compiled iteration kernels against the numpy fallback.

Runs the primal-dual sweep and the consensus sweep for a fixed step
budget on one random game, with both backends started from the same
point, and reports steps per second plus the speedup.  The convergence
tolerance is set below zero so every run spends the full budget.
"""

import argparse
import sys
import time

import numpy as np

from vgne import (
    build_graph,
    default_preconditioner,
    default_start,
    exact_constants,
    random_game,
)
from vgne._kernels import pyloops
from vgne.game import stacked_bounds

try:
    from vgne._kernels import _cyloops
except ImportError:
    _cyloops = None


def pfb_setup(spec, pre):
    """Kernel argument tuple plus a fresh (x, lam) state factory."""
    cost = spec.cost
    lo, hi = stacked_bounds(spec)
    args = (
        cost.q.copy(),
        np.ascontiguousarray(cost.c),
        np.ascontiguousarray(cost.d),
        np.ascontiguousarray(spec.coupling.matrix()),
        spec.coupling.b.copy(),
        pre.alpha_vector(),
        float(pre.gamma),
        lo.copy(),
        hi.copy(),
    )
    start = default_start(spec)

    def state():
        return start.x.copy(), start.lam.copy()

    return args, state


def consensus_setup(spec, graph, alpha):
    cost = spec.cost
    lo, hi = stacked_bounds(spec)
    indptr, indices, inv_sizes = graph.closed_csr()
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
        True,
    )
    x0 = default_start(spec).x

    def state():
        return x0.copy(), x0.copy()

    return args, state


def best_rate(runner, state, args, steps, repeats):
    """Steps per second, best of ``repeats`` runs from identical starts."""
    best = float("inf")
    final = None
    for _ in range(repeats):
        vec_a, vec_b = state()
        t0 = time.perf_counter()
        done, res, status = runner(vec_a, vec_b, *args, steps, -1.0)
        best = min(best, time.perf_counter() - t0)
        if done != steps or status != pyloops.STATUS_BUDGET:
            raise RuntimeError(f"run stopped early: {done} steps, status {status}")
        final = np.concatenate([vec_a, vec_b])
    return steps / best, final


def bench_pair(name, py_runner, cy_runner, args, state, steps, repeats):
    py_rate, py_final = best_rate(py_runner, state, args, steps, repeats)
    print(f"{name:10s} python   {py_rate:12.0f} steps/s")
    if cy_runner is None:
        return
    cy_rate, cy_final = best_rate(cy_runner, state, args, steps, repeats)
    gap = float(np.max(np.abs(py_final - cy_final)))
    print(f"{name:10s} compiled {cy_rate:12.0f} steps/s")
    print(f"{name:10s} speedup  {cy_rate / py_rate:11.1f}x  (final-state gap {gap:.2e})")


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Benchmark the compiled kernels against the numpy fallback."
    )
    parser.add_argument("--agents", type=int, default=40)
    parser.add_argument("--dim", type=int, default=4)
    parser.add_argument("--constraints", type=int, default=8)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    opts = parser.parse_args(argv)

    if _cyloops is None:
        print("compiled backend not built; timing the fallback only", file=sys.stderr)

    spec = random_game(opts.agents, opts.dim, opts.constraints, opts.seed)
    pre = default_preconditioner(spec)
    print(
        f"game: {opts.agents} agents, dim {opts.dim}, "
        f"{opts.constraints} coupling rows, {opts.steps} steps, "
        f"best of {opts.repeats}"
    )

    args, state = pfb_setup(spec, pre)
    bench_pair(
        "pfb",
        pyloops.pfb_run,
        _cyloops.pfb_run if _cyloops else None,
        args,
        state,
        opts.steps,
        opts.repeats,
    )

    free = random_game(opts.agents, opts.dim, 0, opts.seed + 1)
    graph = build_graph("cycle", opts.agents)
    consts = exact_constants(free)
    alpha = 0.2 * consts.eta / consts.lip_f**2
    args, state = consensus_setup(free, graph, alpha)
    bench_pair(
        "consensus",
        pyloops.consensus_run,
        _cyloops.consensus_run if _cyloops else None,
        args,
        state,
        opts.steps,
        opts.repeats,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
