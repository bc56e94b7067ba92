"""Preconditioning matrices, step-size bounds, and contraction constants.

The forward-backward iteration is run in the metric of the block matrix

    Phi = [[inv(alpha), -A'],
           [-A,          inv(gamma) I]]

with blockwise primal steps ``alpha_i`` and one dual step ``gamma``.  This
module builds Phi, certifies its positive definiteness, computes the
admissible step-size region, and derives the cocoercivity and averagedness
constants that quantify convergence.  The asymmetric one-step variant is
covered by the same machinery through its symmetric part.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import StepSizeError
from .game import CouplingConstraint, GameSpec, Monotonicity, resolve_constants

__all__ = [
    "Preconditioner",
    "AsymmetricStepMatrix",
    "PositiveDefiniteness",
    "operator_norm",
    "build_preconditioner",
    "check_positive_definite",
    "max_dual_step",
    "equal_step_bound",
    "cocoercivity_constant",
    "averagedness_constant",
    "build_asymmetric_matrix",
    "convergent_steps",
    "equal_step_size",
    "default_preconditioner",
]

# Below this size a full SVD is cheaper and exact; above it, power iteration.
_SVD_THRESHOLD = 64


def operator_norm(
    A: np.ndarray,
    *,
    rtol: float = 1e-10,
    max_iters: int = 10000,
) -> float:
    """Spectral norm of a dense matrix.

    Small matrices (either side at most 64) go through a full SVD.  Larger
    ones use power iteration on the Gram matrix of the smaller side with a
    deterministic all-ones start, stopping when the Rayleigh estimate is
    stable to ``rtol``; failure to settle raises with diagnostics.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    if min(A.shape) <= _SVD_THRESHOLD:
        return float(np.linalg.norm(A, 2))
    G = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = float(v @ (G @ v))
    for _ in range(max_iters):
        w = G @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= rtol * max(abs(lam_new), 1.0):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise RuntimeError(
        f"power iteration did not settle within {max_iters} iterations "
        f"(last estimate {lam}, relative change above {rtol})"
    )


@dataclass(frozen=True)
class Preconditioner:
    """Blockwise primal steps, one dual step, and the induced metric.

    ``alphas`` holds one step per agent (expanded blockwise over each
    agent's coordinates), ``gamma`` the dual step.  The dense matrix is
    materialized on demand; the coupling-norm is cached at construction
    since every bound in this module consumes it.
    """

    alphas: np.ndarray
    gamma: float
    coupling: CouplingConstraint
    coupling_norm: float = None  # type: ignore[assignment]

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        if a.shape != (self.coupling.num_agents,):
            raise StepSizeError(
                f"alphas: expected {self.coupling.num_agents} entries, received {a.shape[0]}"
            )
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise StepSizeError("primal steps must be positive finite numbers")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise StepSizeError(f"dual step gamma={self.gamma} must be positive and finite")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.coupling_norm is None:
            object.__setattr__(self, "coupling_norm", operator_norm(self.coupling.matrix()))

    @property
    def num_agents(self) -> int:
        return self.coupling.num_agents

    @property
    def decision_dim(self) -> int:
        return self.coupling.decision_dim

    def alpha_vector(self) -> np.ndarray:
        """Primal steps expanded to one entry per stacked coordinate."""
        return np.repeat(self.alphas, self.decision_dim)

    def dense(self) -> np.ndarray:
        """The full metric matrix, of order nN + m."""
        A = self.coupling.matrix()
        nN = A.shape[1]
        m = A.shape[0]
        out = np.zeros((nN + m, nN + m))
        out[:nN, :nN] = np.diag(1.0 / self.alpha_vector())
        out[:nN, nN:] = -A.T
        out[nN:, :nN] = -A
        out[nN:, nN:] = np.eye(m) / self.gamma
        return out

    def weighted_norm(self, dx: np.ndarray, dlam: np.ndarray) -> float:
        """Norm of ``col(dx, dlam)`` in the metric, without forming the matrix."""
        A = self.coupling.matrix()
        quad = (
            float(dx @ (dx / self.alpha_vector()))
            - 2.0 * float(dlam @ (A @ dx))
            + float(dlam @ dlam) / self.gamma
        )
        return float(np.sqrt(max(quad, 0.0)))


class PositiveDefiniteness(NamedTuple):
    """Outcome of the two-level definiteness check."""

    sufficient_condition: bool
    definite: bool


def build_preconditioner(
    alphas, gamma: float, coupling: CouplingConstraint
) -> Preconditioner:
    """Assemble the metric from steps and the coupling constraint.

    ``alphas`` may be a scalar (shared by all agents) or one value per
    agent.  No admissibility is enforced here; use
    :func:`check_positive_definite` and the step-size bounds for that.
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if a.shape == (1,):
        a = np.full(coupling.num_agents, a[0])
    return Preconditioner(alphas=a, gamma=gamma, coupling=coupling)


def check_positive_definite(pre: Preconditioner) -> PositiveDefiniteness:
    """Evaluate the sufficient condition and the exact definiteness test.

    The sufficient condition is ``gamma < 1 / (||A||^2 max_i alpha_i)``
    (trivially true without coupling).  The exact test attempts a Cholesky
    factorization of the dense matrix.  The condition implies definiteness
    but not conversely; the gap is real and is exercised by the tests.
    """
    nrm2 = pre.coupling_norm**2
    amax = float(np.max(pre.alphas))
    sufficient = bool(pre.gamma * nrm2 * amax < 1.0)
    try:
        np.linalg.cholesky(pre.dense())
        definite = True
    except np.linalg.LinAlgError:
        definite = False
    return PositiveDefiniteness(sufficient_condition=sufficient, definite=definite)


def max_dual_step(
    alphas, constants: Monotonicity, coupling_norm: float
) -> float:
    """Largest admissible dual step for the given primal steps.

    Returns ``(1/||A||^2) (1/max_i alpha_i - lip^2/(2 eta))``; the primal
    steps must stay strictly below ``2 eta / lip^2`` for a positive value
    to exist, otherwise this raises.  Without coupling the bound is +inf.
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(a <= 0):
        raise StepSizeError("primal steps must be positive")
    amax = float(np.max(a))
    cap = 2.0 * constants.eta / constants.lip_f**2
    if amax >= cap:
        raise StepSizeError(
            f"max primal step {amax} reaches the cocoercivity cap {cap}; "
            "no positive dual step exists"
        )
    if coupling_norm == 0.0:
        return float("inf")
    return (1.0 / coupling_norm**2) * (1.0 / amax - 1.0 / cap)


def equal_step_bound(constants: Monotonicity, coupling_norm: float) -> float:
    """Supremum of the admissible shared step when alpha_i = gamma = tau.

    Solves the quadratic admissibility condition for the equal-step case;
    the closed form ``k / (1 + sqrt(1 + ||A||^2 k^2))`` with
    ``k = 4 eta / lip^2`` is used because it stays accurate as the coupling
    norm vanishes, where the bound tends to ``k / 2 = 2 eta / lip^2``.
    """
    k = 4.0 * constants.eta / constants.lip_f**2
    return k / (1.0 + np.sqrt(1.0 + (coupling_norm * k) ** 2))


def cocoercivity_constant(pre: Preconditioner, constants: Monotonicity) -> float:
    """Cocoercivity modulus of the forward part in the preconditioned metric.

    Computed as ``(eta / lip^2) * lambda_min(inv(alpha) - gamma A'A)``,
    the product of the standard-metric modulus of the gradient map and the
    smallest eigenvalue of the primal Schur block of the inverse metric.
    """
    A = pre.coupling.matrix()
    S = np.diag(1.0 / pre.alpha_vector()) - pre.gamma * (A.T @ A)
    lam_min = float(np.linalg.eigvalsh(S)[0])
    return (constants.eta / constants.lip_f**2) * lam_min


def averagedness_constant(beta: float) -> float:
    """Averagedness parameter ``2 beta / (4 beta - 1)`` of the update map.

    Requires ``beta > 1/2``; the value then lies in (1/2, 1), approaching
    1/2 as beta grows and 1 as beta drops to the threshold.
    """
    if not beta > 0.5:
        raise StepSizeError(
            f"cocoercivity constant beta={beta} must exceed 1/2 for the "
            "update to be averaged"
        )
    return 2.0 * beta / (4.0 * beta - 1.0)


@dataclass(frozen=True)
class AsymmetricStepMatrix:
    """Lower-triangular one-step matrix of the asymmetric variant.

    Dense form ``[[I/tau, 0], [-2A, I/tau]]``.  Its symmetric part equals
    the metric of :func:`build_preconditioner` with all steps equal to
    ``tau``, which is why the asymmetric iteration inherits the same
    convergence certificates.
    """

    tau: float
    coupling: CouplingConstraint

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise StepSizeError(f"step tau={self.tau} must be positive and finite")

    def dense(self) -> np.ndarray:
        A = self.coupling.matrix()
        m, nN = A.shape
        out = np.zeros((nN + m, nN + m))
        out[:nN, :nN] = np.eye(nN) / self.tau
        out[nN:, :nN] = -2.0 * A
        out[nN:, nN:] = np.eye(m) / self.tau
        return out

    def symmetric_part(self) -> np.ndarray:
        d = self.dense()
        return 0.5 * (d + d.T)

    def as_preconditioner(self) -> Preconditioner:
        """The metric whose dense matrix equals this matrix's symmetric part."""
        return build_preconditioner(self.tau, self.tau, self.coupling)


def build_asymmetric_matrix(tau: float, coupling: CouplingConstraint) -> AsymmetricStepMatrix:
    return AsymmetricStepMatrix(tau=tau, coupling=coupling)


# -- step policies -------------------------------------------------------------


def convergent_steps(
    spec: GameSpec,
    *,
    alpha_safety: float = 0.9,
    gamma_safety: float = 0.99,
) -> tuple[np.ndarray, float]:
    """Steps strictly inside the convergence region, by safety factors.

    All agents get ``alpha_safety * 2 eta / lip^2``; the dual step is
    ``gamma_safety`` times the resulting admissible maximum.  When the
    coupling is absent (or identically zero) the dual bound is infinite
    and the dual step defaults to 1.
    """
    if not (0 < alpha_safety < 1 and 0 < gamma_safety < 1):
        raise StepSizeError("safety factors must lie strictly between 0 and 1")
    constants = resolve_constants(spec)
    alpha = alpha_safety * 2.0 * constants.eta / constants.lip_f**2
    alphas = np.full(spec.num_agents, alpha)
    nrm = operator_norm(spec.coupling.matrix())
    gmax = max_dual_step(alphas, constants, nrm)
    gamma = 1.0 if np.isinf(gmax) else gamma_safety * gmax
    return alphas, gamma


def equal_step_size(spec: GameSpec, *, safety: float = 0.99) -> float:
    """Shared step ``tau`` strictly inside the equal-step admissible range."""
    if not 0 < safety < 1:
        raise StepSizeError("safety factor must lie strictly between 0 and 1")
    constants = resolve_constants(spec)
    nrm = operator_norm(spec.coupling.matrix())
    return safety * equal_step_bound(constants, nrm)


def default_preconditioner(spec: GameSpec, **kwargs) -> Preconditioner:
    """Metric from :func:`convergent_steps` with default safety factors."""
    alphas, gamma = convergent_steps(spec, **kwargs)
    return build_preconditioner(alphas, gamma, spec.coupling)
