"""Acceptance gate: the ten quantitative properties this package promises.

Each test prints exactly one pass/fail line.  Run with ``pytest
tests/test_acceptance.py -v -s`` to see the lines as they execute.  The
criteria cover solver convergence with certified steps, the zero/fixed-point
equivalence, metric positive-definiteness, cocoercivity and averagedness
certificates, the equal-step/asymmetric-update equivalence, the distributed
iteration, the defining inclusions, trajectory monotonicity, and bitwise
reproducibility of the experiment runner.
"""

import csv

import numpy as np
import pytest

import vgne
from vgne.operators import split_operators
from vgne.runner import run_experiments
from vgne.specio import TRACE_COLUMNS, load_manifest, write_spec

ORACLE_BUDGET = 1_000_000


def _line(num, label, ok):
    print(f"criterion {num:2d} {label}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num} ({label}) failed"


def _within_oracle_budget(N, n, m):
    return 3 ** (n * N) * 2**m <= ORACLE_BUDGET


def _theorem_cases():
    # fixed cases pin full coverage of every stated N, n, m value; the
    # random tail fills up to 50, rejecting enumeration-infeasible sizes
    cases = [
        (2, 1, 0), (3, 1, 1), (4, 1, 2), (5, 1, 3), (6, 1, 4),
        (7, 1, 2), (8, 1, 3), (2, 2, 1), (3, 2, 2), (4, 2, 3),
        (5, 2, 4), (6, 2, 0),
    ]
    rng = np.random.default_rng(190)
    while len(cases) < 50:
        N = int(rng.integers(2, 9))
        n = int(rng.integers(1, 3))
        m = int(rng.integers(0, 5))
        if _within_oracle_budget(N, n, m):
            cases.append((N, n, m))
    return cases


@pytest.fixture(scope="module")
def theorem_runs():
    """Shared solves for the convergence and trajectory-monotonicity criteria."""
    runs = []
    config = vgne.SolverConfig(keep_iterates=True)
    for i, (N, n, m) in enumerate(_theorem_cases()):
        spec = vgne.random_game(N, n, m, seed=100 + i)
        alphas, gamma = vgne.convergent_steps(spec)
        pre = vgne.build_preconditioner(alphas, gamma, spec.coupling)
        point, report = vgne.pfb_solve(spec, pre=pre, config=config)
        star = vgne.oracle_vgne(spec)
        runs.append((spec, pre, point, report, star))
    return runs


def test_criterion_01_certified_step_convergence(theorem_runs):
    cases = _theorem_cases()
    cover_N = {N for N, _, _ in cases}
    cover_n = {n for _, n, _ in cases}
    cover_m = {m for _, _, m in cases}
    ok = (
        len(cases) == 50
        and cover_N == set(range(2, 9))
        and cover_n == {1, 2}
        and cover_m == set(range(5))
    )
    for spec, pre, point, report, star in theorem_runs:
        ok &= report.converged and report.final_fp_residual < 1e-8
        ok &= report.iterations <= 200_000
        ok &= vgne.check_kkt(point, spec, tol=1e-6).passes()
        ok &= float(np.abs(point.x - star.x).max()) <= 1e-5
    _line(1, "convergence with certified steps on 50 games", ok)


def test_criterion_02_zero_fixed_point_equivalence():
    ok = True
    rng = np.random.default_rng(210)
    for i in range(20):
        N = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        m = int(rng.integers(0, 4))
        spec = vgne.random_game(N, n, m, seed=200 + i)
        ok &= vgne.check_zer_fix_equivalence(spec, tol=1e-8).ok
    _line(2, "zero/fixed-point equivalence on 20 games", ok)


def test_criterion_03_sufficient_condition_soundness():
    rng = np.random.default_rng(314)
    ok = True
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 7))
        A = rng.normal(size=(m, k))
        alphas = rng.uniform(0.05, 2.0, size=k)
        coupling = vgne.CouplingConstraint(
            a_blocks=tuple(A[:, j : j + 1] for j in range(k)), b=np.zeros(m)
        )
        cap = 1.0 / (vgne.operator_norm(A) ** 2 * alphas.max())
        gamma = rng.uniform(0.02, 0.98) * cap
        flags = vgne.check_positive_definite(
            vgne.build_preconditioner(alphas, gamma, coupling)
        )
        ok &= flags.sufficient_condition and flags.definite

    # exhibit: uneven primal steps make the bound conservative, so a dual
    # step violating it can still leave the metric positive definite
    coupling = vgne.CouplingConstraint(
        a_blocks=(np.array([[1.0]]), np.array([[1.0]])), b=np.zeros(1)
    )
    exhibit = vgne.check_positive_definite(
        vgne.build_preconditioner(np.array([1.0, 0.01]), 0.7, coupling)
    )
    ok &= (not exhibit.sufficient_condition) and exhibit.definite
    _line(3, "sufficient metric condition sound on 1000 draws plus gap exhibit", ok)


def _sample_pairs(spec, rng, count):
    lo, hi = vgne.stacked_bounds(spec)
    m = spec.num_coupling_rows
    W1 = np.column_stack(
        [rng.uniform(lo, hi, size=(count, spec.dim)), rng.uniform(0, 2, size=(count, m))]
    ) if m else rng.uniform(lo, hi, size=(count, spec.dim))
    W2 = np.column_stack(
        [rng.uniform(lo, hi, size=(count, spec.dim)), rng.uniform(0, 2, size=(count, m))]
    ) if m else rng.uniform(lo, hi, size=(count, spec.dim))
    return W1, W2


def test_criterion_04_cocoercivity_certificates():
    rng = np.random.default_rng(404)
    ok = True
    for i in range(10):
        N = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        m = int(rng.integers(1, 4))
        spec = vgne.random_game(N, n, m, seed=400 + i)
        constants = vgne.exact_constants(spec)
        ratio = constants.eta / constants.lip_f**2
        pre = vgne.default_preconditioner(spec)
        beta = vgne.cocoercivity_constant(pre, constants)
        phi = pre.dense()
        H, _ = vgne.affine_gradient_form(spec)

        W1, W2 = _sample_pairs(spec, rng, 1000)
        dW = W1 - W2
        dF = dW[:, : spec.dim] @ H.T  # forward differences; the constant row drops out
        dA = np.column_stack([dF, np.zeros((1000, m))])
        inner = np.einsum("ij,ij->i", dA, dW)

        # plain-metric modulus of the forward part
        ok &= bool(np.all(inner >= ratio * np.einsum("ij,ij->i", dA, dA) - 1e-9))

        # metric-weighted modulus of the preconditioned forward part
        phi_inv_dA = np.linalg.solve(phi, dA.T).T
        ok &= bool(
            np.all(inner >= beta * np.einsum("ij,ij->i", dA, phi_inv_dA) - 1e-9)
        )
    _line(4, "cocoercivity certificates on 1000 pairs across 10 games", ok)


def test_criterion_05_averagedness_certificate():
    rng = np.random.default_rng(505)
    ok = True

    # averagedness of the update map at the shared-step policy value
    for i in range(5):
        spec = vgne.random_game(int(rng.integers(2, 5)), int(rng.integers(1, 3)),
                                int(rng.integers(1, 4)), seed=500 + i)
        constants = vgne.exact_constants(spec)
        tau = vgne.equal_step_size(spec)
        pre = vgne.build_preconditioner(
            np.full(spec.num_agents, tau), tau, spec.coupling
        )
        beta = vgne.cocoercivity_constant(pre, constants)
        ok &= beta > 0.5
        theta = vgne.averagedness_constant(beta)
        ok &= 0.5 < theta < 1.0
        W1, W2 = _sample_pairs(spec, rng, 200)
        m = spec.num_coupling_rows
        for w1, w2 in zip(W1, W2):
            p1 = vgne.PrimalDualPoint(x=w1[: spec.dim], lam=w1[spec.dim :])
            p2 = vgne.PrimalDualPoint(x=w2[: spec.dim], lam=w2[spec.dim :])
            t1 = vgne.pfb_step(p1, spec, pre)
            t2 = vgne.pfb_step(p2, spec, pre)
            lhs = pre.weighted_norm(t1.x - t2.x, t1.lam - t2.lam) ** 2
            base = pre.weighted_norm(p1.x - p2.x, p1.lam - p2.lam) ** 2
            rx = (p1.x - t1.x) - (p2.x - t2.x)
            rl = (p1.lam - t1.lam) - (p2.lam - t2.lam)
            drag = pre.weighted_norm(rx, rl) ** 2
            ok &= lhs <= base - (1.0 - theta) / theta * drag + 1e-9

    # every shared step strictly below the admissible bound keeps beta > 1/2
    for i in range(50):
        spec = vgne.random_game(int(rng.integers(2, 6)), int(rng.integers(1, 3)),
                                int(rng.integers(1, 5)), seed=550 + i)
        constants = vgne.exact_constants(spec)
        bound = vgne.equal_step_bound(
            constants, vgne.operator_norm(spec.coupling.matrix())
        )
        for frac in (0.3, 0.7, 0.99):
            pre = vgne.build_preconditioner(
                np.full(spec.num_agents, frac * bound), frac * bound, spec.coupling
            )
            ok &= vgne.cocoercivity_constant(pre, constants) > 0.5
        # the raw bound is the supremum of the open admissible interval:
        # the modulus degenerates to exactly one half there
        at_bound = vgne.build_preconditioner(
            np.full(spec.num_agents, bound), bound, spec.coupling
        )
        ok &= abs(vgne.cocoercivity_constant(at_bound, constants) - 0.5) <= 1e-9
    _line(5, "averagedness certificate and shared-step modulus", ok)


def test_criterion_06_equal_step_asymmetric_equivalence():
    rng = np.random.default_rng(606)
    worst = 0.0
    for i in range(100):
        N = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        m = int(rng.integers(0, 3))
        spec = vgne.random_game(N, n, m, seed=600 + i)
        tau = vgne.equal_step_size(spec)
        D = vgne.build_asymmetric_matrix(tau, spec.coupling)
        pre = vgne.build_preconditioner(
            np.full(spec.num_agents, tau), tau, spec.coupling
        )
        a = b = vgne.default_start(spec)
        for _ in range(500):
            a = vgne.pfb_step(a, spec, pre)
            b = vgne.apa_step(b, spec, D)
            worst = max(worst, float(np.abs(a.stacked - b.stacked).max()))
    _line(6, "equal-step and asymmetric updates coincide over 500 iterations "
             f"on 100 games (max gap {worst:.1e})", worst <= 1e-13)


def test_criterion_07_distributed_iteration():
    ok = True
    config = vgne.SolverConfig(
        residual_tol=1e-10,
        record_inclusion_checks=True,
        inclusion_tol=1e-8,
        keep_iterates=True,
    )
    for kind, N, n, seed in (("cycle", 6, 1, 700), ("complete", 5, 2, 701)):
        spec = vgne.random_game(N, n, 0, seed=seed)
        graph = vgne.build_graph(kind, N)
        point, report = vgne.consensus_solve(spec, graph, config=config)
        central, _ = vgne.pfb_solve(
            spec, config=vgne.SolverConfig(residual_tol=1e-11)
        )
        ok &= report.converged
        ok &= float(np.abs(point.x - central.x).max()) <= 1e-5
        ok &= report.inclusion_failures == ()
        # the default start copies the decisions into the estimates, which
        # pins the estimate mean to the decision mean at every iteration
        for state in report.iterates:
            gap = np.abs(
                state.v.reshape(N, n).mean(axis=0) - state.x.reshape(N, n).mean(axis=0)
            ).max()
            ok &= float(gap) <= 1e-12
    _line(7, "distributed iteration: limit, inclusion audit, mean tracking", ok)


def test_criterion_08_update_inclusion_audit():
    rng = np.random.default_rng(808)
    ok = True
    config = vgne.SolverConfig(record_inclusion_checks=True, inclusion_tol=1e-8)
    for i in range(10):
        N = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        m = int(rng.integers(0, 4))
        spec = vgne.random_game(N, n, m, seed=800 + i)
        _, report = vgne.pfb_solve(spec, config=config)
        ok &= report.converged and report.inclusion_failures == ()
    _line(8, "every primal-dual iterate pair satisfies the defining inclusion", ok)


def test_criterion_09_trajectory_monotonicity(theorem_runs):
    ok = True
    for spec, pre, point, report, star in theorem_runs:
        if not report.converged:
            ok = False
            continue
        dists = [
            pre.weighted_norm(it.x - star.x, it.lam - star.lam)
            for it in report.iterates
        ]
        steps = np.diff(np.asarray(dists))
        ok &= bool(np.all(steps <= 1e-10))
    _line(9, "distance to equilibrium non-increasing along all 50 trajectories", ok)


def test_criterion_10_manifest_determinism(tmp_path):
    specs = {
        "coupled.yaml": vgne.random_game(3, 2, 2, seed=1000),
        "free.yaml": vgne.random_game(4, 1, 0, seed=1001),
    }
    for name, spec in specs.items():
        write_spec(spec, tmp_path / name)
    (tmp_path / "runs.yaml").write_text(
        "manifest_version: 1\n"
        "entries:\n"
        "  - {name: a, spec: coupled.yaml, trace: a.csv, algorithm: pfb,\n"
        "     policy: theorem, seed: 5, tol: 1.0e-9, trace_every: 7}\n"
        "  - {name: b, spec: coupled.yaml, trace: b.csv, algorithm: apa,\n"
        "     policy: equal, seed: 7, tol: 1.0e-9}\n"
        "  - {name: c, spec: free.yaml, trace: c.csv, algorithm: kns,\n"
        "     graph_kind: cycle, seed: 9, tol: 1.0e-9}\n"
    )
    manifest = load_manifest(tmp_path / "runs.yaml")
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        summaries = run_experiments(manifest, output_dir=out)
        assert all(s.get("converged") for s in summaries)
        outputs.append(out)

    wall = TRACE_COLUMNS.index("wall_ns")
    ok = True
    for name in ("a.csv", "b.csv", "c.csv"):
        rows = []
        for out in outputs:
            with open(out / name, newline="") as fh:
                rows.append(
                    [[c for i, c in enumerate(r) if i != wall] for r in csv.reader(fh)]
                )
        ok &= rows[0] == rows[1]
    _line(10, "manifest reruns byte-identical apart from timing columns", ok)
