"""Outer iterations: preconditioned Richardson and right-preconditioned GMRES."""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np
import scipy.linalg as sla

DIVERGENCE_FACTOR = 1e3


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    reduction_achieved: float = np.nan
    wall_time: float = 0.0


def _as_apply(op):
    if op is None:
        return lambda x: x
    if callable(op):
        return op
    return lambda x: op @ x


def richardson(operator, preconditioner, rhs, reduction_tol=1e-6, max_iter=100):
    """``x <- x + B (b - A x)`` from ``x = 0`` until ``|b - A x| <= tol |b|``.

    Returns ``(x, report)``; one iteration is one preconditioner application.
    """
    A, B = _as_apply(operator), _as_apply(preconditioner)
    start = time.perf_counter()
    x = np.zeros_like(rhs, dtype=float)
    r = rhs.astype(float, copy=True)
    r0 = np.linalg.norm(r)
    report = SolveReport(residual_history=[r0])
    if r0 == 0.0:
        report.converged, report.reduction_achieved = True, 0.0
    for it in range(1, max_iter + 1):
        if report.converged:
            break
        x += B(r)
        r = rhs - A(x)
        res = np.linalg.norm(r)
        report.residual_history.append(res)
        report.iterations = it
        if res <= reduction_tol * r0:
            report.converged = True
        elif not np.isfinite(res) or res > DIVERGENCE_FACTOR * r0:
            break
    if r0 > 0:
        report.reduction_achieved = report.residual_history[-1] / r0
    report.wall_time = time.perf_counter() - start
    return x, report


def gmres(operator, preconditioner, rhs, reduction_tol=1e-6, max_iter=100, restart=None):
    """Right-preconditioned GMRES with modified Gram-Schmidt, zero initial guess.

    The stopping test uses the residual norm carried by the Givens rotations,
    which equals ``|b - A x_j|`` in exact arithmetic; the true residual of the
    returned iterate is recorded as the last history entry and decides
    ``converged``.
    """
    A, M = _as_apply(operator), _as_apply(preconditioner)
    restart = restart or max_iter
    start = time.perf_counter()
    x = np.zeros_like(rhs, dtype=float)
    r = rhs.astype(float, copy=True)
    r0 = np.linalg.norm(r)
    report = SolveReport(residual_history=[r0])
    if r0 == 0.0:
        report.converged, report.reduction_achieved = True, 0.0
        return x, report
    target = reduction_tol * r0
    total = 0
    beta = r0
    while total < max_iter:
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, len(rhs)))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = A(M(V[j]))
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1e-14 * beta
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                H[i, j], H[i + 1, j] = cs[i] * H[i, j] + sn[i] * H[i + 1, j], -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j], H[j + 1, j] = denom, 0.0
            g[j + 1], g[j] = -sn[j] * g[j], cs[j] * g[j]
            total += 1
            j_done = j + 1
            report.residual_history.append(abs(g[j + 1]))
            if abs(g[j + 1]) <= target or breakdown:
                break
        y = sla.solve_triangular(H[:j_done, :j_done], g[:j_done])
        x += M(V[:j_done].T @ y)
        r = rhs - A(x)
        beta = np.linalg.norm(r)
        if beta <= target or abs(g[j_done]) <= target:
            break
    report.iterations = total
    report.residual_history[-1] = beta
    report.converged = beta <= target
    report.reduction_achieved = beta / r0
    report.wall_time = time.perf_counter() - start
    return x, report


def dense_solve(matrix, rhs):
    """LU solve with partial pivoting."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] != np.shape(rhs)[0]:
        raise ValueError("dimension mismatch")
    return sla.lu_solve(sla.lu_factor(matrix), rhs)
