"""Variational equilibrium seeking for average-aggregative games.

The package models games whose costs couple through the decision average,
with box local sets and one affine shared constraint, and computes their
variational generalized Nash equilibria by preconditioned projected-
gradient iterations: a semi-decentralized primal-dual method, an
asymmetric one-step variant, and a fully distributed consensus iteration.
A verification layer certifies solutions independently by active-set
enumeration and audits the operator-theoretic properties the convergence
proofs rest on.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import (
    ConstantsUnavailableError,
    DimensionError,
    DivergenceError,
    EquilibriumCountError,
    GraphError,
    OracleBudgetError,
    SpecFormatError,
    SpecVersionError,
    StepSizeError,
    VgneError,
)
from .game import (
    BoxSet,
    CouplingConstraint,
    FeasibilityReport,
    GameSpec,
    Monotonicity,
    OracleCost,
    PrimalDualPoint,
    QuadraticCost,
    aggregate,
    default_start,
    exact_constants,
    affine_gradient_form,
    extended_pseudo_gradient,
    feasibility_check,
    pseudo_gradient,
    resolve_constants,
    stacked_bounds,
)
from .generate import random_game, random_point_in_box
from .network import CommGraph, build_graph, mix
from .operators import (
    SplitOperatorPair,
    eval_T_residual,
    eval_forward,
    normal_cone_membership,
    primal_dual_box,
    project_box,
    project_nonneg,
    split_operators,
    stacked_box,
)
from .precond import (
    AsymmetricStepMatrix,
    Preconditioner,
    averagedness_constant,
    build_asymmetric_matrix,
    build_preconditioner,
    check_positive_definite,
    cocoercivity_constant,
    convergent_steps,
    default_preconditioner,
    equal_step_bound,
    equal_step_size,
    max_dual_step,
    operator_norm,
)
from .solvers import (
    ConsensusState,
    ConvergenceReport,
    SolverConfig,
    apa_solve,
    apa_step,
    consensus_solve,
    consensus_step,
    pfb_solve,
    pfb_step,
)
from .runner import run_experiments
from .specio import (
    ExperimentEntry,
    ExperimentManifest,
    load_graph,
    load_manifest,
    load_spec,
    specs_identical,
    write_graph,
    write_spec,
    write_trace_csv,
)
from .verification import (
    ConsensusSplitting,
    EquivalenceReport,
    KktReport,
    SampledConstants,
    check_fb_inclusion,
    check_kkt,
    check_zer_fix_equivalence,
    consensus_splitting,
    estimate_constants,
    oracle_vgne,
)

__all__ = [name for name in dir() if not name.startswith("_")]
