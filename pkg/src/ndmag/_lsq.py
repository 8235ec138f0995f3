"""Small Levenberg-Marquardt solver shared by the spectrum and wire fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LsqResult:
    x: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    cost: float
    initial_cost: float
    iterations: int
    converged: bool
    message: str


def forward_jacobian(fun, x, r, rel_step=1e-6):
    J = np.empty((r.size, x.size))
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0)
        xh = x.copy()
        xh[j] += h
        J[:, j] = (fun(xh) - r) / (xh[j] - x[j])
    return J


def levenberg_marquardt(
    fun,
    x0,
    *,
    max_iter=200,
    rel_step=1e-6,
    ftol=1e-10,
    gtol=1e-8,
    lam0=1e-3,
    lam_max=1e16,
) -> LsqResult:
    """Minimize ``0.5 * |fun(x)|**2`` by damped Gauss-Newton steps.

    Converges when an accepted step lowers the cost by less than ``ftol``
    relative, or when the gradient infinity-norm drops below ``gtol``.
    Only cost-decreasing steps are accepted.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals are not finite at the starting point")
    cost = 0.5 * float(r @ r)
    initial_cost = cost
    J = forward_jacobian(fun, x, r, rel_step)
    lam = lam0
    converged, message = False, "iteration limit reached"
    it = 0
    while it < max_iter:
        g = J.T @ r
        if cost == 0.0 or np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient below tolerance"
            break
        it += 1
        A = J.T @ J
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                x_new = x + step
                r_new = np.asarray(fun(x_new), dtype=float)
                cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
                if cost_new < cost:
                    lam = max(lam / 10.0, 1e-12)
                    break
            lam *= 10.0
            if lam > lam_max:
                message = "no further decrease possible"
                return LsqResult(x, r, J, cost, initial_cost, it, converged, message)
        rel_decrease = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        J = forward_jacobian(fun, x, r, rel_step)
        if rel_decrease < ftol:
            converged, message = True, "relative cost decrease below tolerance"
            break
    return LsqResult(x, r, J, cost, initial_cost, it, converged, message)


def covariance(J, cost=None, dof=None):
    """``(J^T J)^-1``, scaled by the residual variance when ``cost`` and ``dof`` are given.

    Returns ``None`` when the normal matrix is numerically singular.
    """
    A = J.T @ J
    if not np.all(np.isfinite(A)):
        return None
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-10 * s[0]:
        return None
    cov = np.linalg.inv(A)
    if cost is not None:
        cov = cov * (2.0 * cost / max(dof, 1))
    return cov
