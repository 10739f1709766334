"""Natural injection between nested RT_k x Q_k spaces and its transpose."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .dof import DofMap
from .element import ReferenceBasis

# child position p = 2 * (row % 2) + col % 2  ->  offset of the child in the parent
CHILD_OFFSETS = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])


def child_matrices(basis: ReferenceBasis):
    """Reference embedding matrices per child position.

    ``vel[p][i, j]`` is fine dof ``i`` of child ``p`` applied to coarse shape
    function ``j``; ``pres[p]`` likewise for the pressure basis. Under the
    Piola map, the coarse field pulled back to a child is
    ``0.5 * vhat(offset + xhat / 2)``.
    """
    vel, pres = [], []
    for off in CHILD_OFFSETS:
        to_parent = lambda x, off=off: off + 0.5 * np.atleast_2d(x)  # noqa: E731
        vel.append(basis.apply_dofs(lambda x: 0.5 * basis.values(to_parent(x))).T)
        pres.append(basis.project_pressure(lambda x: basis.pressure_values(to_parent(x))).T)
    return np.stack(vel), np.stack(pres)


@dataclass(eq=False)
class Prolongation:
    """Injection from level ``coarse_level`` into ``coarse_level + 1``.

    ``velocity_full`` acts on full coefficient vectors; ``velocity`` on the
    free unknowns only.
    """

    coarse_level: int
    velocity_full: sp.csr_matrix
    velocity: sp.csr_matrix
    pressure: sp.csr_matrix

    @cached_property
    def mixed(self) -> sp.csr_matrix:
        return sp.block_diag([self.velocity, self.pressure], format="csr")

    def prolong(self, x):
        return self.mixed @ x

    def restrict(self, r):
        """Transpose action on a residual (dual) vector."""
        return self.mixed.T @ r


def build_prolongation(coarse: DofMap, fine: DofMap) -> Prolongation:
    if fine.mesh.level != coarse.mesh.level + 1 or fine.basis is not coarse.basis:
        raise ValueError("fine dof map must belong to the refinement of the coarse level")
    if fine.mesh.bounds != coarse.mesh.bounds:
        raise ValueError("levels belong to different domains")
    vel_local, pres_local = child_matrices(coarse.basis)
    cells = np.arange(fine.mesh.n_cells)
    parents = fine.mesh.parent(cells)
    pos = fine.mesh.child_position(cells)

    # each fine velocity row is written by the first child that sees it
    rows = fine.cell_dofs
    _, first = np.unique(rows.ravel(), return_index=True)
    owned = np.zeros(rows.size, dtype=bool)
    owned[first] = True
    owned = owned.reshape(rows.shape)

    local = vel_local[pos] * owned[:, :, None]
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(coarse.cell_dofs[parents][:, None, :], local.shape).ravel()
    keep = local.ravel() != 0.0
    P = sp.csr_matrix((local.ravel()[keep], (r[keep], c[keep])), shape=(fine.n_velocity, coarse.n_velocity))

    pl = pres_local[pos]
    r = np.broadcast_to(fine.cell_pressure_dofs[:, :, None], pl.shape).ravel()
    c = np.broadcast_to(coarse.cell_pressure_dofs[parents][:, None, :], pl.shape).ravel()
    keep = pl.ravel() != 0.0
    Pp = sp.csr_matrix((pl.ravel()[keep], (r[keep], c[keep])), shape=(fine.n_pressure, coarse.n_pressure))

    return Prolongation(
        coarse_level=coarse.mesh.level,
        velocity_full=P,
        velocity=P[fine.free][:, coarse.free].tocsr(),
        pressure=Pp,
    )


def restrict_residual(prolongation: Prolongation, residual):
    return prolongation.restrict(residual)
