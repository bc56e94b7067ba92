"""Pure-numpy iteration kernels, the fallback backend.

Each runner advances the iteration in place for up to ``max_steps`` steps,
stopping early on convergence or on a non-finite residual.  Returns
``(steps_done, last_residual, status)`` with status 0 on convergence, 1 on
budget exhaustion, 2 on a non-finite iterate.  The compiled backend in
``_cyloops`` implements the same signatures.
"""

from __future__ import annotations

import numpy as np

from ..network import csr_mix

STATUS_CONVERGED = 0
STATUS_BUDGET = 1
STATUS_NONFINITE = 2


def pfb_run(x, lam, q, c, dmat, A, b, alpha_vec, gamma, lo, hi, max_steps, tol):
    """Forward-backward sweep for quadratic costs; x and lam updated in place."""
    N, n = dmat.shape
    m = A.shape[0]
    res = float("nan")
    steps = 0
    for _ in range(max_steps):
        steps += 1
        X = x.reshape(N, n)
        s = X.mean(axis=0)
        G = q[:, None] * X + (c @ s)[None, :] + (X @ c) / N + dmat
        g = G.reshape(-1)
        if m:
            g = g + A.T @ lam
        xn = np.minimum(np.maximum(x - alpha_vec * g, lo), hi)
        dx = xn - x
        quad = float(dx @ (dx / alpha_vec))
        if m:
            r = A @ (2.0 * xn - x) - b
            ln = np.maximum(lam + gamma * r, 0.0)
            dl = ln - lam
            quad += float(dl @ dl) / gamma - 2.0 * float(dl @ (A @ dx))
            lam[:] = ln
        x[:] = xn
        if not np.isfinite(quad):
            return steps, quad, STATUS_NONFINITE
        res = float(np.sqrt(quad)) if quad > 0.0 else 0.0
        if res <= tol:
            return steps, res, STATUS_CONVERGED
    return steps, res, STATUS_BUDGET


def consensus_run(
    x, v, q, c, dmat, alpha, lo, hi, indptr, indices, inv_sizes, chain_term, max_steps, tol
):
    """Projected-gradient step on local aggregate estimates; x and v in place."""
    N, n = dmat.shape
    res = float("nan")
    steps = 0
    for _ in range(max_steps):
        steps += 1
        X = x.reshape(N, n)
        sig = csr_mix(v.reshape(N, n), indptr, indices, inv_sizes)
        G = q[:, None] * X + sig @ c.T + dmat
        if chain_term:
            G = G + (X @ c) / N
        xn = np.minimum(np.maximum(x - alpha * G.reshape(-1), lo), hi)
        vn = sig.reshape(-1) + xn - x
        dx = xn - x
        dv = vn - v
        res = float(np.sqrt(dx @ dx + dv @ dv))
        x[:] = xn
        v[:] = vn
        if not np.isfinite(res):
            return steps, res, STATUS_NONFINITE
        if res <= tol:
            return steps, res, STATUS_CONVERGED
    return steps, res, STATUS_BUDGET
