"""Global numbering of RT_k velocity and Q_k pressure unknowns on one level.

Velocity numbering: all face moments first (``face * (k+1) + moment``),
then cell-interior moments cell by cell. Pressure unknowns are cell-local,
``cell * (k+1)^2 + i``. The normal moments on the domain boundary are kept in
the numbering but constrained to zero; solvers work on the *free* velocity
unknowns followed by all pressure unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .element import ReferenceBasis, piola_scales
from .mesh import MeshLevel, Patch


@dataclass(eq=False)
class DofMap:
    mesh: MeshLevel
    basis: ReferenceBasis
    n_velocity: int
    n_pressure: int
    cell_dofs: np.ndarray
    cell_pressure_dofs: np.ndarray
    signs: np.ndarray
    boundary_normal_dofs: np.ndarray
    free: np.ndarray
    free_index: np.ndarray

    @property
    def level(self) -> int:
        return self.mesh.level

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def n_unknowns(self) -> int:
        """Size of the mixed system: free velocities plus pressures."""
        return self.n_free + self.n_pressure

    def face_dofs(self, faces) -> np.ndarray:
        n = self.basis.n_face_moments
        faces = np.asarray(faces, dtype=np.int64)
        return (faces[:, None] * n + np.arange(n)).ravel()

    def interior_dofs(self, cells) -> np.ndarray:
        return self.cell_dofs[np.asarray(cells, dtype=np.int64)][:, self.basis.interior_dofs].ravel()

    def expand(self, u_free) -> np.ndarray:
        """Full velocity coefficient vector from free coefficients (boundary moments zero)."""
        u = np.zeros(u_free.shape[:-1] + (self.n_velocity,))
        u[..., self.free] = u_free
        return u

    @property
    def pressure_mean_weights(self) -> np.ndarray:
        """``w @ p`` is the integral of the pressure with coefficients ``p``."""
        w = self.mesh.cell_area[:, None] * self.basis.pressure_integrals[None, :]
        return w.ravel()

    @property
    def pressure_constant(self) -> np.ndarray:
        """Coefficients of the constant function 1."""
        return np.tile(self.basis.project_pressure(lambda q: np.ones(len(q))), self.mesh.n_cells)

    def evaluate_velocity(self, coeffs, points):
        """Evaluate a velocity field given by full coefficients at physical points.

        Points lying on a face are evaluated from the cell returned by
        :meth:`MeshLevel.locate`.
        """
        points = np.atleast_2d(points)
        cells = self.mesh.locate(points)
        xref = (points - self.mesh.cell_origin[cells]) / self.mesh.cell_size[cells]
        vscale, _, _ = piola_scales(self.mesh.cell_size[cells])
        out = np.empty((len(points), 2))
        for n, (c, xr) in enumerate(zip(cells, xref)):
            phi = self.basis.values(xr[None, :])[:, 0, :]
            out[n] = vscale[n] * (coeffs[self.cell_dofs[c]] @ phi)
        return out

    def interpolate_velocity(self, func) -> np.ndarray:
        """Full coefficient vector of the canonical RT interpolant of ``func(points) -> (npts, 2)``.

        Face moments are taken from the first cell seeing the face, so ``func``
        should have continuous normal components.
        """
        mesh = self.mesh
        coeffs = np.zeros(self.n_velocity)
        _, _, det = piola_scales(mesh.cell_size)
        for c in range(mesh.n_cells)[::-1]:
            origin, size = mesh.cell_origin[c], mesh.cell_size[c]
            # reference field: det(J) J^{-1} v(Psi(xhat))
            ref = lambda xr: func(origin + size * xr) * (det[c] / size)  # noqa: E731
            coeffs[self.cell_dofs[c]] = self.basis.apply_dofs(ref)
        return coeffs

    def interpolate_pressure(self, func) -> np.ndarray:
        mesh = self.mesh
        coeffs = np.zeros(self.n_pressure)
        for c in range(mesh.n_cells):
            origin, size = mesh.cell_origin[c], mesh.cell_size[c]
            coeffs[self.cell_pressure_dofs[c]] = self.basis.project_pressure(lambda xr: func(origin + size * xr))
        return coeffs

    def evaluate_pressure(self, coeffs, points):
        points = np.atleast_2d(points)
        cells = self.mesh.locate(points)
        xref = (points - self.mesh.cell_origin[cells]) / self.mesh.cell_size[cells]
        out = np.empty(len(points))
        for n, (c, xr) in enumerate(zip(cells, xref)):
            out[n] = coeffs[self.cell_pressure_dofs[c]] @ self.basis.pressure_values(xr[None, :])[:, 0]
        return out


def enumerate_dofs(mesh: MeshLevel, basis: ReferenceBasis) -> DofMap:
    nf = basis.n_face_moments
    n_face_total = mesh.n_faces * nf
    n_int = basis.n_interior
    n_cells = mesh.n_cells

    face_part = (mesh.cell_faces[:, :, None] * nf + np.arange(nf)).reshape(n_cells, 4 * nf)
    int_part = n_face_total + np.arange(n_cells)[:, None] * n_int + np.arange(n_int)
    cell_dofs = np.hstack([face_part, int_part]).astype(np.int64)
    n_velocity = n_face_total + n_cells * n_int

    npl = basis.pressure_dim
    cell_pressure_dofs = np.arange(n_cells * npl, dtype=np.int64).reshape(n_cells, npl)

    boundary = (mesh.boundary_faces[:, None] * nf + np.arange(nf)).ravel()
    mask = np.ones(n_velocity, dtype=bool)
    mask[boundary] = False
    free = np.flatnonzero(mask)
    free_index = np.full(n_velocity, -1, dtype=np.int64)
    free_index[free] = np.arange(len(free))

    return DofMap(
        mesh=mesh,
        basis=basis,
        n_velocity=n_velocity,
        n_pressure=n_cells * npl,
        cell_dofs=cell_dofs,
        cell_pressure_dofs=cell_pressure_dofs,
        # face normals are global +x/+y, so every cell sees the same orientation
        signs=np.ones_like(cell_dofs, dtype=float),
        boundary_normal_dofs=np.sort(boundary),
        free=free,
        free_index=free_index,
    )


@dataclass(frozen=True)
class PatchDofSet:
    """Unknowns of one vertex patch.

    ``velocity_dofs`` and ``pressure_dofs`` use the global numbering;
    ``velocity_free`` indexes into the free velocity vector.
    """

    patch: Patch
    velocity_dofs: np.ndarray
    velocity_free: np.ndarray
    pressure_dofs: np.ndarray
    mean_constraint: np.ndarray


def patch_dofs(dofs: DofMap, patch: Patch) -> PatchDofSet:
    if len(patch.cells) == 0:
        raise ValueError(f"patch of vertex {patch.vertex_id} has no cells")
    # patch-interior faces are never on the domain boundary
    vel = np.concatenate([dofs.face_dofs(patch.interior_faces), dofs.interior_dofs(patch.cells)])
    vel = vel[dofs.free_index[vel] >= 0]
    pres = dofs.cell_pressure_dofs[patch.cells].ravel()
    return PatchDofSet(
        patch=patch,
        velocity_dofs=vel,
        velocity_free=dofs.free_index[vel],
        pressure_dofs=pres,
        mean_constraint=dofs.pressure_mean_weights[pres],
    )
