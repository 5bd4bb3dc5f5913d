"""Levenberg-Marquardt on a residual vector with numeric Jacobians."""

from __future__ import annotations

import numpy as np

DAMPING_INIT = 1e-3
DAMPING_UP = 10.0
DAMPING_DOWN = 10.0
STEP_TOL = 1e-8
IMPROVE_TOL = 1e-10


def numeric_jacobian(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    r0 = fn(x)
    jac = np.empty((r0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        jac[:, i] = (fn(xp) - r0) / eps
    return jac


def levenberg_marquardt(fn, x0: np.ndarray, max_iter: int = 100, jac_fn=None,
                        jac_eps: float = 1e-6, improve_rel: float = 0.0):
    """Minimize ||fn(x)||^2. Returns (x, cost, converged).

    Damping starts at 1e-3, is multiplied by 10 on a rejected step and divided
    by 10 on an accepted one; convergence is a step norm below 1e-8 or a cost
    improvement below max(1e-10, improve_rel * cost). ``jac_eps`` sets the
    finite-difference step: pick it large enough that the residuals' value
    resolution (e.g. float32 tensor lookups) does not swamp the differences.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fn(x)
    cost = float(r @ r)
    mu = DAMPING_INIT
    converged = False
    for _ in range(max_iter):
        jac = jac_fn(x) if jac_fn is not None else numeric_jacobian(fn, x, eps=jac_eps)
        g = jac.T @ r
        h = jac.T @ jac
        # Marquardt scaling: damping proportional to the curvature per
        # parameter, so ill-scaled problems (metres vs radians) keep moving
        # along their shallow directions even at high damping.
        scale = np.diag(np.maximum(np.diag(h), 1e-12))
        accepted = False
        for _ in range(20):
            try:
                step = np.linalg.solve(h + mu * scale, -g)
            except np.linalg.LinAlgError:
                mu *= DAMPING_UP
                continue
            x_new = x + step
            r_new = fn(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                improvement = cost - cost_new
                x, r, cost = x_new, r_new, cost_new
                mu = max(mu / DAMPING_DOWN, 1e-12)
                accepted = True
                if np.linalg.norm(step) < STEP_TOL or improvement < max(IMPROVE_TOL, improve_rel * cost):
                    converged = True
                break
            mu *= DAMPING_UP
        if not accepted:
            converged = True  # damping exhausted: local minimum within tolerance
            break
        if converged:
            break
    return x, cost, converged
