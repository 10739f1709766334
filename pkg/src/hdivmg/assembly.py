"""Sparse assembly of the interior penalty, divergence and mass forms.

All matrices are assembled over the full velocity numbering first (boundary
normal moments included) and then restricted to the free unknowns in
:func:`assemble_level`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import logging

import numpy as np
import scipy.sparse as sp

from .dof import DofMap, enumerate_dofs
from .element import ReferenceBasis, piola_scales
from .mesh import LOCAL_FACES, MeshHierarchy, MeshLevel

log = logging.getLogger(__name__)

INHERITED = "inherited"
NONINHERITED = "noninherited"


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty parameter choice for the interior penalty form.

    ``inherited`` uses ``sigma_bar / h_L`` on every level, ``noninherited``
    uses ``sigma_bar / h_l`` on level ``l``.
    """

    strategy: str
    sigma_bar: float
    h_finest: float

    def __post_init__(self):
        if self.strategy not in (INHERITED, NONINHERITED):
            raise ValueError(f"unknown penalty strategy {self.strategy!r}")
        if self.sigma_bar <= 0:
            raise ValueError("sigma_bar must be positive")

    @classmethod
    def for_hierarchy(cls, hierarchy: MeshHierarchy, k: int, strategy: str = INHERITED, sigma_bar=None):
        if sigma_bar is None:
            sigma_bar = default_sigma_bar(k)
        return cls(strategy, float(sigma_bar), hierarchy[hierarchy.L].h)

    def sigma(self, mesh: MeshLevel) -> float:
        h = self.h_finest if self.strategy == INHERITED else mesh.h
        return self.sigma_bar / h


def default_sigma_bar(k: int) -> float:
    return float((k + 1) * (k + 2))


def _scatter(rows, cols, vals, shape):
    """COO assembly of a stack of local matrices ``vals[n, i, j]``."""
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    return sp.csr_matrix((vals.ravel(), (r, c)), shape=shape)


def _per_unique_size(mesh: MeshLevel, local):
    """Evaluate ``local(size)`` once per distinct cell size and broadcast to all cells."""
    sizes, inverse = np.unique(mesh.cell_size, axis=0, return_inverse=True)
    mats = np.stack([local(s) for s in sizes])
    return mats[np.asarray(inverse).ravel()]


# -- interior penalty form --------------------------------------------------

def _cell_gradient_matrix(basis: ReferenceBasis, size):
    _, grads, _ = basis.cell_tables
    _, gscale, det = piola_scales(size)
    g = grads * gscale[0]
    return np.einsum("mqab,nqab,q->mn", g, g, basis.cell_rule.weights) * det[0]


def assemble_gradient(dofs: DofMap) -> sp.csr_matrix:
    """Broken gradient form, the sum over cells of (grad u, grad v)."""
    local = _per_unique_size(dofs.mesh, lambda s: _cell_gradient_matrix(dofs.basis, s))
    n = dofs.n_velocity
    return _scatter(dofs.cell_dofs, dofs.cell_dofs, local, (n, n))


def _traces(basis: ReferenceBasis, mesh: MeshLevel, cells, local_face):
    """Physical values and gradients of all shape functions of ``cells`` on one local face."""
    vals, grads = basis.face_tables[local_face]
    vscale, gscale, _ = piola_scales(mesh.cell_size[cells])
    v = vals[None] * vscale[:, None, None, :]
    g = grads[None] * gscale[:, None, None, :, :]
    return v, g


def assemble_ip(dofs: DofMap, sigma: float) -> sp.csr_matrix:
    """Symmetric interior penalty form on the full velocity numbering."""
    mesh, basis = dofs.mesh, dofs.basis
    n = dofs.n_velocity
    w = basis.face_rule.weights
    mat = assemble_gradient(dofs)

    for axis in (0, 1):
        faces = mesh.interior_faces[mesh.face_axis[mesh.interior_faces] == axis]
        if len(faces) == 0:
            continue
        lo, hi = mesh.face_cells[faces].T
        # lower cell sees the face as right/top, upper cell as left/bottom
        v_lo, g_lo = _traces(basis, mesh, lo, 2 * axis + 1)
        v_hi, g_hi = _traces(basis, mesh, hi, 2 * axis)
        jump = np.concatenate([v_lo, -v_hi], axis=1)
        dn_avg = 0.5 * np.concatenate([g_lo[..., axis], g_hi[..., axis]], axis=1)
        wq = w[None, :] * mesh.face_length[faces][:, None]
        pen = np.einsum("fmqa,fpqa,fq->fmp", jump, jump, wq)
        cons = np.einsum("fmqa,fpqa,fq->fmp", jump, dn_avg, wq)
        local = sigma * pen - cons - cons.transpose(0, 2, 1)
        idx = np.hstack([dofs.cell_dofs[lo], dofs.cell_dofs[hi]])
        mat = mat + _scatter(idx, idx, local, (n, n))

    for local_face, (axis, side) in enumerate(LOCAL_FACES):
        faces = mesh.cell_faces[:, local_face]
        on_boundary = (mesh.face_cells[faces] < 0).any(axis=1)
        cells = np.flatnonzero(on_boundary)
        if len(cells) == 0:
            continue
        v, g = _traces(basis, mesh, cells, local_face)
        dn = (1.0 if side else -1.0) * g[..., axis]
        wq = w[None, :] * mesh.face_length[faces[cells]][:, None]
        pen = np.einsum("fmqa,fpqa,fq->fmp", v, v, wq)
        cons = np.einsum("fmqa,fpqa,fq->fmp", v, dn, wq)
        local = 2.0 * sigma * pen - cons - cons.transpose(0, 2, 1)
        idx = dofs.cell_dofs[cells]
        mat = mat + _scatter(idx, idx, local, (n, n))

    mat.sum_duplicates()
    return mat.tocsr()


# -- divergence and pressure forms -------------------------------------------

def _local_div(basis: ReferenceBasis):
    """``(q_i, div phi_m)`` on any cell; the Piola determinant cancels."""
    q = basis.cell_rule.points
    return np.einsum("iq,mq,q->im", basis.pressure_values(q), basis.divergences(q), basis.cell_rule.weights)


def assemble_div(dofs: DofMap) -> sp.csr_matrix:
    """``B[i, j] = (q_i, div v_j)`` over the full velocity numbering."""
    local = np.broadcast_to(_local_div(dofs.basis), (dofs.mesh.n_cells,) + (dofs.basis.pressure_dim, dofs.basis.velocity_dim))
    return _scatter(dofs.cell_pressure_dofs, dofs.cell_dofs, local, (dofs.n_pressure, dofs.n_velocity))


def assemble_pressure_mass(dofs: DofMap) -> sp.csr_matrix:
    q, w = dofs.basis.cell_rule.points, dofs.basis.cell_rule.weights
    psi = dofs.basis.pressure_values(q)
    ref = np.einsum("iq,jq,q->ij", psi, psi, w)
    local = ref[None] * dofs.mesh.cell_area[:, None, None]
    return _scatter(dofs.cell_pressure_dofs, dofs.cell_pressure_dofs, local, (dofs.n_pressure,) * 2)


def assemble_divdiv(dofs: DofMap) -> sp.csr_matrix:
    """Cell-wise ``(div u, div v)`` on the full velocity numbering."""
    basis = dofs.basis
    d = basis.divergences(basis.cell_rule.points)
    ref = np.einsum("mq,nq,q->mn", d, d, basis.cell_rule.weights)
    local = ref[None] / dofs.mesh.cell_area[:, None, None]
    n = dofs.n_velocity
    return _scatter(dofs.cell_dofs, dofs.cell_dofs, local, (n, n))


def assemble_rhs(dofs: DofMap, f) -> np.ndarray:
    """Load vector ``(f, v_i)`` for a vector field ``f(points) -> (npts, 2)`` or a constant pair."""
    mesh, basis = dofs.mesh, dofs.basis
    q, w = basis.cell_rule.points, basis.cell_rule.weights
    pts = mesh.cell_origin[:, None, :] + mesh.cell_size[:, None, :] * q[None]
    if callable(f):
        fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(mesh.n_cells, len(q), 2)
    else:
        fv = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_cells, len(q), 2))
    vals, _, _ = basis.cell_tables
    vscale, _, det = piola_scales(mesh.cell_size)
    local = np.einsum("cqa,mqa,ca,q,c->cm", fv, vals, vscale, w, det)
    return np.bincount(dofs.cell_dofs.ravel(), weights=local.ravel(), minlength=dofs.n_velocity)


# -- operators ----------------------------------------------------------------

@dataclass(eq=False)
class BlockOperator:
    """Mixed operator ``[[A, B^T], [-B, eps M]]`` on free velocities and all pressures."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    epsilon: float = 0.0

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self):
        n = self.A.shape[0] + self.M.shape[0]
        return (n, n)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T], [-self.B, self.epsilon * self.M]], format="csr")

    def apply(self, x):
        return self.matrix @ x

    def __matmul__(self, x):
        return self.matrix @ x

    def split(self, x):
        return x[..., : self.n_velocity], x[..., self.n_velocity :]


@dataclass(eq=False)
class LevelOperators:
    """All forms of one level restricted to the free velocity unknowns."""

    dofs: DofMap
    sigma: float
    A_full: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    D: sp.csr_matrix

    def mixed(self, epsilon: float = 0.0) -> BlockOperator:
        return BlockOperator(self.A, self.B, self.M, epsilon)

    def elliptic(self, epsilon: float) -> sp.csr_matrix:
        if epsilon <= 0:
            raise ValueError("the penalty form needs epsilon > 0; use the mixed operator instead")
        return (self.A + self.D / epsilon).tocsr()

    def rhs(self, f) -> np.ndarray:
        return assemble_rhs(self.dofs, f)[self.dofs.free]


def assemble_penalty_elliptic(dofs: DofMap, epsilon: float, sigma: float) -> sp.csr_matrix:
    """``a + (div u, div v) / eps`` on the free velocity unknowns."""
    if epsilon <= 0:
        raise ValueError("the penalty form needs epsilon > 0; use the mixed operator instead")
    full = assemble_ip(dofs, sigma) + assemble_divdiv(dofs) / epsilon
    return full[dofs.free][:, dofs.free].tocsr()


def assemble_level(mesh: MeshLevel, basis: ReferenceBasis, penalty: PenaltyConfig) -> LevelOperators:
    dofs = enumerate_dofs(mesh, basis)
    sigma = penalty.sigma(mesh)
    A_full = assemble_ip(dofs, sigma)
    free = dofs.free
    ops = LevelOperators(
        dofs=dofs,
        sigma=sigma,
        A_full=A_full,
        A=A_full[free][:, free].tocsr(),
        B=assemble_div(dofs)[:, free].tocsr(),
        M=assemble_pressure_mass(dofs),
        D=assemble_divdiv(dofs)[free][:, free].tocsr(),
    )
    log.debug("level %d: %d free velocities, %d pressures", mesh.level, dofs.n_free, dofs.n_pressure)
    return ops


def dump_coo(mat) -> str:
    """Coordinate text format, one ``row col value`` line per stored entry."""
    coo = sp.coo_matrix(mat)
    return "".join(f"{r} {c} {v:.17g}\n" for r, c, v in zip(coo.row, coo.col, coo.data))
