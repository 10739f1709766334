"""Numerical oracles for the structural properties of the discretization and solver.

Every check returns an :class:`OracleReport`; reports can be written as JSON
lines with :func:`write_results`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import INHERITED, LevelOperators, PenaltyConfig, assemble_gradient
from .element import piola_transform
from .mesh import LOCAL_FACES, build_hierarchy
from .multigrid import build_level_operators
from .smoother import ELLIPTIC, SmootherConfig, build_patch_solvers
from .transfer import build_prolongation


@dataclass
class OracleReport:
    name: str
    params: dict
    measured: dict
    tolerance: dict
    passed: bool
    notes: str = ""

    def line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} {self.params} {self.measured}"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def write_results(reports, path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.line() + "\n")


def level_operators(level: int, k: int, L: int | None = None, strategy: str = INHERITED, sigma_bar=None):
    """Operators of all levels ``0..L`` (``L`` defaults to ``level``) on the default domain."""
    L = level if L is None else L
    hier = build_hierarchy(L=L)
    penalty = PenaltyConfig.for_hierarchy(hier, k, strategy, sigma_bar)
    return build_level_operators(hier, k, penalty)


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


# -- divergence relation ------------------------------------------------------

def check_div_relation(ops: LevelOperators, rank_max_level: int = 2, tol: float = 1e-12) -> OracleReport:
    """``div V_l`` lies in ``Q_l`` and ``B`` maps onto the mean-zero pressures."""
    dofs = ops.dofs
    basis = dofs.basis
    q, w = basis.cell_rule.points, basis.cell_rule.weights
    # a rule exact for the squared residual of degree 2k+2 per direction
    div = basis.divergences(q)
    psi = basis.pressure_values(q)
    coef = np.einsum("mq,iq,q->mi", div, psi, w)
    resid = div - coef @ psi
    rel = np.sqrt(np.einsum("mq,q->m", resid**2, w)) / np.maximum(np.sqrt(np.einsum("mq,q->m", div**2, w)), 1e-300)
    measured = {"max_projection_residual": float(rel.max())}
    passed = bool(rel.max() <= tol)
    if dofs.level <= rank_max_level:
        rank = int(np.linalg.matrix_rank(_dense(ops.B)))
        measured.update(rank=rank, expected_rank=dofs.n_pressure - 1)
        passed = passed and rank == dofs.n_pressure - 1
    return OracleReport(
        "div-relation",
        {"level": dofs.level, "k": basis.degree},
        measured,
        {"projection_residual": tol},
        passed,
    )


# -- Helmholtz decomposition and inf-sup ------------------------------------

def _stokes_matrix(ops: LevelOperators):
    """``[[A, B^T, 0], [B, 0, w], [0, w^T, 0]]`` with a pressure mean multiplier."""
    w = sp.csr_matrix(ops.dofs.pressure_mean_weights[None, :])
    return sp.bmat([[ops.A, ops.B.T, None], [ops.B, None, w.T], [None, w, None]], format="csc")


def helmholtz_decompose(ops: LevelOperators, u: np.ndarray):
    """Split free velocity coefficients ``u`` into ``(u0, u_perp)``.

    ``u0`` is the ``a``-orthogonal projection onto the discretely divergence
    free subspace; ``u_perp = u - u0``.
    """
    n, m = ops.A.shape[0], ops.B.shape[0]
    rhs = np.concatenate([ops.A @ u, np.zeros(m + 1)])
    sol = spla.splu(_stokes_matrix(ops)).solve(rhs)
    u0 = sol[:n]
    return u0, u - u0


def divergence_free_basis(ops: LevelOperators) -> np.ndarray:
    """Orthonormal (Euclidean) basis of the kernel of ``B``, as columns."""
    return sla.null_space(_dense(ops.B))


def estimate_inf_sup(ops: LevelOperators) -> float:
    """Discrete inf-sup constant with the ``a``-norm on velocities and L2 on pressures.

    ``gamma^2`` is the smallest nonzero eigenvalue of ``B A^{-1} B^T q = lam M q``;
    the zero eigenvalue belongs to the constant pressure.
    """
    A, B, M = _dense(ops.A), _dense(ops.B), _dense(ops.M)
    S = B @ sla.cho_solve(sla.cho_factor(A), B.T)
    lam = sla.eigh(0.5 * (S + S.T), M, eigvals_only=True)
    if lam[0] < -1e-8 * lam[-1]:
        raise np.linalg.LinAlgError("Schur complement is not semidefinite")
    return float(np.sqrt(lam[1]))


def coercivity_constant(ops: LevelOperators) -> float:
    """Smallest ``alpha`` with ``a(v, v) >= alpha |grad_h v|^2`` on the free velocities."""
    G = _dense(assemble_gradient(ops.dofs)[ops.dofs.free][:, ops.dofs.free])
    A = _dense(ops.A)
    return float(sla.eigh(G, A, eigvals_only=True)[-1] ** -1)


def check_helmholtz(ops: LevelOperators, n_samples: int = 20, seed: int = 0, gamma=None, tol: float = 1e-10):
    """Orthogonality, divergence-freeness and the two-sided norm estimate of ``u_perp``.

    The upper estimate is checked in the form ``a(u, u) <= |div u|^2 / gamma^2``;
    the literal ``1 / gamma`` form is reported as ``upper_literal_ok``.
    """
    rng = np.random.default_rng(seed)
    n = ops.A.shape[0]
    gamma = estimate_inf_sup(ops) if gamma is None else gamma
    alpha = coercivity_constant(ops)
    Z = divergence_free_basis(ops)
    d = 2
    worst = {"div_u0": 0.0, "orthogonality": 0.0, "lower_slack": np.inf, "upper_slack": np.inf}
    literal_ok = True
    for _ in range(n_samples):
        u = rng.standard_normal(n)
        u0, up = helmholtz_decompose(ops, u)
        worst["div_u0"] = max(worst["div_u0"], np.abs(ops.B @ u0).max() / np.abs(u).max())
        v0 = Z @ rng.standard_normal(Z.shape[1])
        a_uu = up @ (ops.A @ up)
        ortho = abs(up @ (ops.A @ v0)) / np.sqrt(a_uu * (v0 @ (ops.A @ v0)))
        worst["orthogonality"] = max(worst["orthogonality"], ortho)
        div2 = up @ (ops.D @ up)
        worst["lower_slack"] = min(worst["lower_slack"], (a_uu - alpha / d**2 * div2) / a_uu)
        worst["upper_slack"] = min(worst["upper_slack"], (div2 / gamma**2 - a_uu) / a_uu)
        literal_ok = literal_ok and a_uu <= div2 / gamma * (1 + 1e-10)
    measured = {k: float(v) for k, v in worst.items()}
    measured.update(gamma=gamma, alpha=alpha, upper_literal_ok=bool(literal_ok))
    passed = (
        measured["div_u0"] <= tol
        and measured["orthogonality"] <= 1e-8
        and measured["lower_slack"] >= -1e-10
        and measured["upper_slack"] >= -1e-8
    )
    return OracleReport(
        "helmholtz",
        {"level": ops.dofs.level, "k": ops.dofs.basis.degree, "samples": n_samples},
        measured,
        {"div": tol, "orthogonality": 1e-8, "slack": -1e-8},
        bool(passed),
    )


def check_inf_sup_trend(level_ops: list[LevelOperators], levels=(1, 2, 3), rel_tol: float = 0.25) -> OracleReport:
    """Ratios ``gamma_l / gamma_{l+1}`` against ``1/sqrt(2)``."""
    gammas = {l: estimate_inf_sup(level_ops[l]) for l in sorted(set(levels) | {l + 1 for l in levels})}
    ratios = {l: gammas[l] / gammas[l + 1] for l in levels}
    target = 1 / np.sqrt(2)
    dev = {l: abs(r - target) / target for l, r in ratios.items()}
    return OracleReport(
        "inf-sup-trend",
        {"L": len(level_ops) - 1, "k": level_ops[0].dofs.basis.degree, "levels": list(levels)},
        {"gamma": {str(l): g for l, g in gammas.items()}, "ratio": {str(l): r for l, r in ratios.items()}},
        {"relative": rel_tol},
        bool(max(dev.values()) <= rel_tol),
    )


# -- mixed / penalty equivalence ---------------------------------------------

def check_equivalence(ops: LevelOperators, epsilon: float, f=(1.0, 1.0), tol: float = 1e-9) -> OracleReport:
    """Direct dense solves of the nearly incompressible mixed system and the penalty form."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    F = ops.rhs(f)
    n = len(F)
    K = _dense(ops.mixed(epsilon).matrix)
    sol = sla.solve(K, np.concatenate([F, np.zeros(ops.M.shape[0])]))
    u_m, p_m = sol[:n], sol[n:]
    u_e = sla.solve(_dense(ops.elliptic(epsilon)), F, assume_a="pos")
    div_u = sla.solve(_dense(ops.M), ops.B @ u_m)
    scale = max(np.linalg.norm(u_m), 1e-300)
    du = np.linalg.norm(u_m - u_e) / scale if np.any(u_m) else np.linalg.norm(u_e)
    dp = np.linalg.norm(epsilon * p_m - div_u) / max(np.linalg.norm(div_u), np.linalg.norm(epsilon * p_m), 1.0)
    return OracleReport(
        "equivalence",
        {"level": ops.dofs.level, "k": ops.dofs.basis.degree, "epsilon": epsilon},
        {"velocity": float(du), "pressure_divergence": float(dp)},
        {"relative": tol},
        bool(du <= tol and dp <= tol),
    )


# -- smoother conditions ----------------------------------------------------

def check_smoother_conditions(
    level_ops: list[LevelOperators],
    level: int,
    epsilon: float,
    eta: float = 0.25,
    n_samples: int = 50,
    seed: int = 0,
    slack: float = 1e-10,
) -> OracleReport:
    """Smoothing condition ``A((I - R A) w, w) >= 0`` and the ratio ``beta_l``.

    ``beta_l`` is the largest sampled value of
    ``(R^{-1} z, z) / A(z, z)`` with ``z = (I - P_{l-1}) w`` and ``P_{l-1}``
    the ``A``-orthogonal projection onto the next coarser space.
    """
    if level < 1:
        raise ValueError("needs a coarser level")
    ops, coarse = level_ops[level], level_ops[level - 1]
    A = ops.elliptic(epsilon)
    Ad = _dense(A)
    R = build_patch_solvers(ops.dofs, A, SmootherConfig(eta, ELLIPTIC)).as_dense()
    R = 0.5 * (R + R.T)
    P = _dense(build_prolongation(coarse.dofs, ops.dofs).velocity)
    Ac = P.T @ Ad @ P
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((Ad.shape[0], n_samples))
    AW = Ad @ W
    energy = np.einsum("ij,ij->j", W, AW)
    cond = energy - np.einsum("ij,ij->j", AW, R @ AW)
    Z = W - P @ sla.solve(Ac, P.T @ AW, assume_a="pos")
    Rinv_Z = sla.solve(R, Z, assume_a="pos")
    beta = np.einsum("ij,ij->j", Z, Rinv_Z) / np.einsum("ij,ij->j", Z, Ad @ Z)
    worst = float((cond / energy).min())
    return OracleReport(
        "smoother-conditions",
        {"level": level, "k": ops.dofs.basis.degree, "epsilon": epsilon, "eta": eta, "samples": n_samples},
        {"min_relative_eq2": worst, "beta": float(beta.max())},
        {"slack": -slack},
        bool(worst >= -slack and np.isfinite(beta).all() and beta.min() > 0),
    )


# -- multigrid contraction ------------------------------------------------------

def contraction_factor(mg, n_steps: int = 20, seed: int = 0) -> float:
    """Power-iteration estimate of ``|I - B A|`` in the energy norm of the finest operator."""
    K = mg.finest.matrix
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[0])
    norm = lambda v: np.sqrt(abs(v @ (K @ v)))  # noqa: E731
    x /= norm(x)
    rho = 0.0
    for _ in range(n_steps):
        y = x - mg(K @ x)
        rho = norm(y)
        if rho == 0.0:
            break
        x = y / rho
    return float(rho)


# -- sparse/dense cross check --------------------------------------------------

def dense_reference_forms(ops: LevelOperators, extra_points: int = 2):
    """Pointwise dense assembly of ``A`` and ``B`` on the free velocities.

    Uses the general Piola map of each cell and a separate, higher-order Gauss
    rule; shares only the reference shape functions with the sparse path.
    """
    dofs = ops.dofs
    mesh, basis = dofs.mesh, dofs.basis
    k = basis.degree
    xg, wg = np.polynomial.legendre.leggauss(k + 2 + extra_points)
    s, ws = 0.5 * (xg + 1), 0.5 * wg
    qx, qy = np.meshgrid(s, s, indexing="ij")
    cq = np.column_stack([qx.ravel(), qy.ravel()])
    cw = np.outer(ws, ws).ravel()
    nv = dofs.n_velocity
    A = np.zeros((nv, nv))
    B = np.zeros((dofs.n_pressure, nv))

    def phys(cell, xref):
        cmap = mesh.cell_map(cell)
        J = cmap.jacobian
        det = np.linalg.det(J)
        v = piola_transform(J, basis.values(xref))
        Jinv = np.linalg.inv(J)
        g = np.einsum("ab,mqbc,cd->mqad", J, basis.gradients(xref), Jinv) / det
        return v, g, abs(det)

    for c in range(mesh.n_cells):
        v, g, det = phys(c, cq)
        idx = dofs.cell_dofs[c]
        A[np.ix_(idx, idx)] += np.einsum("mqab,nqab,q->mn", g, g, cw) * det
        div = g[..., 0, 0] + g[..., 1, 1]
        psi = basis.pressure_values(cq)
        B[np.ix_(dofs.cell_pressure_dofs[c], idx)] += np.einsum("iq,mq,q->im", psi, div, cw) * det

    def face_ref(local_face, t):
        axis, side = LOCAL_FACES[local_face]
        pts = np.empty((len(t), 2))
        pts[:, axis] = side
        pts[:, 1 - axis] = t
        return pts

    sigma = ops.sigma
    for f in range(mesh.n_faces):
        axis = mesh.face_axis[f]
        length = mesh.face_length[f]
        sides = []
        for pos, c in enumerate(mesh.face_cells[f]):
            if c < 0:
                continue
            local_face = 2 * axis + (1 if pos == 0 else 0)
            v, g, _ = phys(c, face_ref(local_face, s))
            normal = np.zeros(2)
            normal[axis] = 1.0 if pos == 0 else -1.0
            sides.append((dofs.cell_dofs[c], v, np.einsum("mqab,b->mqa", g, normal)))
        w = ws * length
        if len(sides) == 2:
            (i1, v1, d1), (i2, v2, d2) = sides
            idx = np.concatenate([i1, i2])
            jump = np.concatenate([v1, -v2])
            avg = 0.5 * np.concatenate([d1, -d2])  # average normal derivative along n of side 1
            local = sigma * np.einsum("mqa,nqa,q->mn", jump, jump, w)
            cons = np.einsum("mqa,nqa,q->mn", jump, avg, w)
        else:
            (idx, v, dn), = sides
            local = 2 * sigma * np.einsum("mqa,nqa,q->mn", v, v, w)
            cons = np.einsum("mqa,nqa,q->mn", v, dn, w)
        # shared face moments appear twice in idx, so accumulate
        np.add.at(A, np.ix_(idx, idx), local - cons - cons.T)
    free = dofs.free
    return A[np.ix_(free, free)], B[:, free]


def check_dense_sparse(ops: LevelOperators, n_samples: int = 5, seed: int = 0, tol: float = 1e-10) -> OracleReport:
    """Sparse operator applications against the pointwise dense reference."""
    A, B = dense_reference_forms(ops)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A.shape[0], n_samples))
    Y = rng.standard_normal((B.shape[0], n_samples))
    errA = np.linalg.norm(ops.A @ X - A @ X) / np.linalg.norm(A @ X)
    errB = np.linalg.norm(ops.B @ X - B @ X) / np.linalg.norm(B @ X)
    errBt = np.linalg.norm(ops.B.T @ Y - B.T @ Y) / np.linalg.norm(B.T @ Y)
    measured = {"A": float(errA), "B": float(errB), "BT": float(errBt)}
    return OracleReport(
        "dense-sparse",
        {"level": ops.dofs.level, "k": ops.dofs.basis.degree},
        measured,
        {"relative": tol},
        bool(max(measured.values()) <= tol),
    )


def divergence_ratio(ops: LevelOperators, u: np.ndarray) -> float:
    """``|B u|_inf / |u|_inf`` for free velocity coefficients."""
    return float(np.abs(ops.B @ u).max() / max(np.abs(u).max(), 1e-300))
