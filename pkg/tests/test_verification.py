import numpy as np
import pytest

import vgne
from vgne.errors import EquilibriumCountError, OracleBudgetError
from vgne.operators import split_operators

from conftest import make_box, scalar_game


def test_oracle_on_binding_constraint(shared_resource_game):
    star = vgne.oracle_vgne(shared_resource_game)
    assert star.x == pytest.approx([0.5, 0.5], abs=1e-9)
    assert star.lam == pytest.approx([0.75], abs=1e-9)


def test_oracle_interior_solution(drift_game):
    star = vgne.oracle_vgne(drift_game)
    assert star.x == pytest.approx([3.0], abs=1e-12)


def test_oracle_solution_passes_kkt(coupled_game):
    star = vgne.oracle_vgne(coupled_game)
    report = vgne.check_kkt(star, coupled_game, tol=1e-7)
    assert report.passes()
    assert report.max_stationarity <= 1e-9


def test_oracle_budget_guard():
    spec = vgne.random_game(13, 1, 0, seed=0)  # 3^13 candidates
    with pytest.raises(OracleBudgetError, match="1594323"):
        vgne.oracle_vgne(spec)
    small = vgne.random_game(2, 1, 0, seed=0)
    with pytest.raises(OracleBudgetError):
        vgne.oracle_vgne(small, max_candidates=5)


def test_oracle_rejects_nonquadratic(drift_game):
    def grad(xi, s):
        return xi - 3.0

    spec = vgne.GameSpec(
        num_agents=1,
        decision_dim=1,
        local_sets=drift_game.local_sets,
        cost=vgne.OracleCost(grads=(grad,)),
        coupling=vgne.CouplingConstraint.none(1, 1),
    )
    with pytest.raises(TypeError, match="quadratic"):
        vgne.oracle_vgne(spec)


def test_oracle_flags_multiple_equilibria():
    # strong negative price coupling destroys uniqueness: both corners of
    # the box verify the first-order conditions
    spec = vgne.GameSpec(
        num_agents=2,
        decision_dim=1,
        local_sets=(make_box([0.0], [1.0]),) * 2,
        cost=vgne.QuadraticCost(q=np.array([0.1, 0.1]), c=np.array([[-3.0]]),
                                d=np.array([[1.0], [1.0]])),
        coupling=vgne.CouplingConstraint.none(2, 1),
    )
    with pytest.raises(EquilibriumCountError):
        vgne.oracle_vgne(spec)


def test_oracle_requires_strictly_feasible_game():
    spec = vgne.GameSpec(
        num_agents=1,
        decision_dim=1,
        local_sets=(make_box([0.0], [1.0]),),
        cost=vgne.QuadraticCost(q=np.array([1.0]), c=np.array([[0.0]]),
                                d=np.array([[0.0]])),
        coupling=vgne.CouplingConstraint(a_blocks=(np.array([[1.0]]),),
                                         b=np.array([-1.0])),
    )
    with pytest.raises(ValueError, match="strict feasibility"):
        vgne.oracle_vgne(spec)


def test_oracle_feasibility_search_handles_infeasible_midpoint(shared_resource_game):
    # box midpoint (5, 5) violates x1 + x2 <= 1, so the fallback search
    # must find an interior point before enumeration starts
    star = vgne.oracle_vgne(shared_resource_game)
    assert star.x == pytest.approx([0.5, 0.5], abs=1e-9)


def test_kkt_detects_perturbation(coupled_game):
    star = vgne.oracle_vgne(coupled_game)
    off = vgne.PrimalDualPoint(x=star.x + 0.1, lam=star.lam)
    report = vgne.check_kkt(off, coupled_game)
    assert not report.passes()
    assert report.max_stationarity >= 0.05


def test_kkt_interior_point_complementarity(drift_game):
    pt = vgne.PrimalDualPoint(x=np.array([3.0]), lam=np.zeros(0))
    report = vgne.check_kkt(pt, drift_game)
    assert report.passes()
    assert report.complementarity == 0.0
    assert report.primal_violation == 0.0
    assert report.dual_violation == 0.0


def test_kkt_flags_negative_multiplier(shared_resource_game):
    pt = vgne.PrimalDualPoint(x=np.array([0.5, 0.5]), lam=np.array([-0.4]))
    report = vgne.check_kkt(pt, shared_resource_game)
    assert report.dual_violation >= 0.4
    assert not report.passes()


def test_inclusion_accepts_true_steps(coupled_game):
    pre = vgne.default_preconditioner(coupled_game)
    pair = split_operators(coupled_game)
    phi = pre.dense()
    rng = np.random.default_rng(9)
    pt, _ = vgne.pfb_solve(coupled_game)  # warm area of the domain
    for _ in range(25):
        start = vgne.PrimalDualPoint(
            x=pt.x + rng.normal(scale=0.3, size=coupled_game.dim),
            lam=np.maximum(pt.lam + rng.normal(scale=0.3, size=pt.lam.size), 0.0),
        )
        nxt = vgne.pfb_step(start, coupled_game, pre)
        assert vgne.check_fb_inclusion(
            start.stacked, nxt.stacked, pair.forward(start.stacked),
            pair.skew, pair.cone, phi,
        )


def test_inclusion_rejects_fake_steps(coupled_game):
    pre = vgne.default_preconditioner(coupled_game)
    pair = split_operators(coupled_game)
    phi = pre.dense()
    rng = np.random.default_rng(10)
    box = vgne.stacked_box(coupled_game)
    rejected = 0
    for _ in range(100):
        start = vgne.PrimalDualPoint(
            x=rng.uniform(box.lower, box.upper),
            lam=rng.uniform(0, 1, coupled_game.num_coupling_rows),
        )
        fake = vgne.PrimalDualPoint(
            x=rng.uniform(box.lower, box.upper),
            lam=rng.uniform(0, 1, coupled_game.num_coupling_rows),
        )
        if not vgne.check_fb_inclusion(
            start.stacked, fake.stacked, pair.forward(start.stacked),
            pair.skew, pair.cone, phi,
        ):
            rejected += 1
    assert rejected >= 99


def test_solver_inclusion_audit_is_clean(coupled_game):
    config = vgne.SolverConfig(record_inclusion_checks=True, residual_tol=1e-9)
    _, report = vgne.pfb_solve(coupled_game, config=config)
    assert report.inclusion_failures == ()


def test_consensus_splitting_structure(free_game):
    g = vgne.build_graph("cycle", free_game.num_agents)
    pieces = vgne.consensus_splitting(free_game, g, alpha=0.1)
    assert np.array_equal(pieces.phi, pieces.phi.T)
    assert np.abs(pieces.skew + pieces.skew.T).max() == 0.0
    # the estimate block carries the graph Laplacian, which is PSD
    eigs = np.linalg.eigvalsh(pieces.extra_linear + pieces.extra_linear.T)
    assert eigs.min() >= -1e-12
    N, n = free_game.num_agents, free_game.decision_dim
    L = np.kron(g.laplacian(), np.eye(n))
    assert np.array_equal(pieces.extra_linear[N * n :, N * n :], L)


def test_consensus_inclusion_on_solver_run(free_game):
    g = vgne.build_graph("cycle", free_game.num_agents)
    config = vgne.SolverConfig(
        record_inclusion_checks=True, residual_tol=1e-9, max_iters=2000
    )
    _, report = vgne.consensus_solve(free_game, g, config=config)
    assert report.inclusion_failures == ()
    assert report.converged


def test_estimated_constants_bracket_exact():
    for seed in range(5):
        spec = vgne.random_game(3, 2, 1, seed=seed)
        exact = vgne.exact_constants(spec)
        est = vgne.estimate_constants(spec, samples=400, seed=seed)
        assert est.eta_hat >= exact.eta - 1e-10
        assert est.lip_hat <= exact.lip_f + 1e-10
        mono = est.as_monotonicity()
        assert mono.eta == est.eta_hat and mono.lip_f == est.lip_hat


def test_estimated_constants_identity_map():
    spec = scalar_game(q=1.0, c=0.0, d=0.0)
    est = vgne.estimate_constants(spec, samples=50, seed=4)
    assert est.eta_hat == pytest.approx(1.0, abs=1e-12)
    assert est.lip_hat == pytest.approx(1.0, abs=1e-12)


def test_estimated_constants_validation():
    spec = scalar_game()
    with pytest.raises(ValueError, match="samples"):
        vgne.estimate_constants(spec, samples=0)
    unbounded = vgne.GameSpec(
        num_agents=1,
        decision_dim=1,
        local_sets=(make_box([0.0], [np.inf]),),
        cost=spec.cost,
        coupling=vgne.CouplingConstraint.none(1, 1),
    )
    with pytest.raises(ValueError, match="bounded"):
        vgne.estimate_constants(unbounded)


def test_estimated_constants_deterministic():
    spec = vgne.random_game(2, 2, 0, seed=8)
    a = vgne.estimate_constants(spec, samples=100, seed=3)
    b = vgne.estimate_constants(spec, samples=100, seed=3)
    assert a == b


def test_zero_fixed_point_equivalence(drift_game, coupled_game):
    for spec in (drift_game, coupled_game):
        report = vgne.check_zer_fix_equivalence(spec)
        assert report.ok
        assert report.fixed_point_gap <= report.tol
        assert report.residual_at_small_step <= report.tol
        assert report.small_step_displacement <= 0.1 * report.tol
