"""Nested hierarchies of axis-aligned quadrilateral meshes.

Level ``l + 1`` is obtained from level ``l`` by splitting every cell into
four congruent children. Everything is stored as flat numpy arrays with a
fixed numbering:

* cells are numbered row by row, ``cell = row * nx + col``;
* vertices likewise, ``vertex = j * (nx + 1) + i``;
* x-normal faces come first (``j * (nx + 1) + i`` for the vertical line
  ``i``), followed by y-normal faces (``n_xfaces + j * nx + i``).

Local face numbering on a cell is 0: left, 1: right, 2: bottom, 3: top.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# local face -> (normal axis, side) where side 0 is the lower coordinate
LOCAL_FACES = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class Patch:
    """Cells sharing one mesh vertex, with the faces inside and on the patch boundary."""

    vertex_id: int
    cells: np.ndarray
    interior_faces: np.ndarray
    boundary_faces: np.ndarray


@dataclass(frozen=True)
class CellMap:
    """Affine map from the reference square onto a cell."""

    origin: np.ndarray
    jacobian: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))

    def __call__(self, xref):
        xref = np.asarray(xref, dtype=float)
        return self.origin + xref @ self.jacobian.T

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.solve(self.jacobian, (x - self.origin).T).T


@dataclass(eq=False)
class MeshLevel:
    level: int
    bounds: tuple[float, float, float, float]
    nx: int
    ny: int

    def __post_init__(self):
        x0, x1, y0, y1 = self.bounds
        self.hx = (x1 - x0) / self.nx
        self.hy = (y1 - y0) / self.ny

    # -- sizes ---------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_xfaces(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_faces(self) -> int:
        return self.n_xfaces + self.nx * (self.ny + 1)

    @property
    def h(self) -> float:
        """Mesh size, taken as the longest cell edge."""
        return max(self.hx, self.hy)

    # -- geometry ------------------------------------------------------------
    @cached_property
    def cell_origin(self) -> np.ndarray:
        row, col = np.divmod(np.arange(self.n_cells), self.nx)
        return np.column_stack(
            [self.bounds[0] + col * self.hx, self.bounds[2] + row * self.hy]
        )

    @cached_property
    def cell_size(self) -> np.ndarray:
        return np.tile([self.hx, self.hy], (self.n_cells, 1))

    @cached_property
    def cell_area(self) -> np.ndarray:
        return self.cell_size.prod(axis=1)

    @cached_property
    def vertices(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_vertices), self.nx + 1)
        return np.column_stack(
            [self.bounds[0] + i * self.hx, self.bounds[2] + j * self.hy]
        )

    def cell_map(self, cell: int) -> CellMap:
        return CellMap(self.cell_origin[cell].copy(), np.diag(self.cell_size[cell]))

    # -- topology ------------------------------------------------------------
    def _xface(self, i, j):
        return j * (self.nx + 1) + i

    def _yface(self, i, j):
        return self.n_xfaces + j * self.nx + i

    @cached_property
    def cell_faces(self) -> np.ndarray:
        """``(n_cells, 4)`` global face ids in local order left, right, bottom, top."""
        row, col = np.divmod(np.arange(self.n_cells), self.nx)
        return np.column_stack(
            [
                self._xface(col, row),
                self._xface(col + 1, row),
                self._yface(col, row),
                self._yface(col, row + 1),
            ]
        )

    @cached_property
    def face_cells(self) -> np.ndarray:
        """``(n_faces, 2)`` incident cells ordered (lower, upper); -1 marks the outside."""
        fc = np.full((self.n_faces, 2), -1, dtype=np.int64)
        for local, (axis, side) in enumerate(LOCAL_FACES):
            # a cell's right/top face has the cell on its lower side
            fc[self.cell_faces[:, local], 1 - side] = np.arange(self.n_cells)
        return fc

    @cached_property
    def face_axis(self) -> np.ndarray:
        axis = np.ones(self.n_faces, dtype=np.int64)
        axis[: self.n_xfaces] = 0
        return axis

    @cached_property
    def face_normal(self) -> np.ndarray:
        """Orientation normal (+x or +y); points from the lower to the higher cell."""
        return np.eye(2)[self.face_axis]

    @cached_property
    def face_length(self) -> np.ndarray:
        return np.where(self.face_axis == 0, self.hy, self.hx)

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero((self.face_cells < 0).any(axis=1))

    @cached_property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero((self.face_cells >= 0).all(axis=1))

    @cached_property
    def cell_vertices(self) -> np.ndarray:
        row, col = np.divmod(np.arange(self.n_cells), self.nx)
        v = lambda i, j: j * (self.nx + 1) + i  # noqa: E731
        return np.column_stack(
            [v(col, row), v(col + 1, row), v(col, row + 1), v(col + 1, row + 1)]
        )

    @cached_property
    def vertex_to_cells(self) -> list[np.ndarray]:
        out = [[] for _ in range(self.n_vertices)]
        for cell, verts in enumerate(self.cell_vertices):
            for v in verts:
                out[v].append(cell)
        return [np.array(sorted(c), dtype=np.int64) for c in out]

    def vertex_patches(self, include_boundary: bool = True) -> list[Patch]:
        """One patch per vertex; boundary vertices are skipped if requested."""
        on_boundary = self.boundary_vertex_mask
        patches = []
        for v, cells in enumerate(self.vertex_to_cells):
            if len(cells) == 0 or (not include_boundary and on_boundary[v]):
                continue
            faces, counts = np.unique(self.cell_faces[cells].ravel(), return_counts=True)
            patches.append(
                Patch(
                    vertex_id=v,
                    cells=cells,
                    interior_faces=faces[counts == 2],
                    boundary_faces=faces[counts == 1],
                )
            )
        return patches

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_vertices), self.nx + 1)
        return (i == 0) | (i == self.nx) | (j == 0) | (j == self.ny)

    def locate(self, points) -> np.ndarray:
        """Cell index containing each point (points on shared edges go up/right)."""
        points = np.atleast_2d(points)
        col = np.floor((points[:, 0] - self.bounds[0]) / self.hx).astype(np.int64)
        row = np.floor((points[:, 1] - self.bounds[2]) / self.hy).astype(np.int64)
        return np.clip(row, 0, self.ny - 1) * self.nx + np.clip(col, 0, self.nx - 1)

    def parent(self, cells) -> np.ndarray:
        """Parent cell on level ``level - 1``."""
        row, col = np.divmod(np.asarray(cells), self.nx)
        return (row // 2) * (self.nx // 2) + col // 2

    def child_position(self, cells) -> np.ndarray:
        """Position 0..3 of each cell inside its parent: ``2 * (row % 2) + col % 2``."""
        row, col = np.divmod(np.asarray(cells), self.nx)
        return 2 * (row % 2) + col % 2

    def dump(self) -> str:
        lines = [
            f"{self.level} {c} {x:.17g} {y:.17g} {self.hx:.17g} {self.hy:.17g}"
            for c, (x, y) in enumerate(self.cell_origin)
        ]
        return "\n".join(lines) + "\n"


@dataclass(eq=False)
class MeshHierarchy:
    domain_bounds: tuple[float, float, float, float]
    levels: list[MeshLevel] = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, level: int) -> MeshLevel:
        return self.levels[level]

    def __len__(self) -> int:
        return len(self.levels)

    def dump(self) -> str:
        return "".join(level.dump() for level in self.levels)


def build_hierarchy(domain_bounds=(-1.0, 1.0, -1.0, 1.0), L: int = 0, coarse_cells=(1, 1)) -> MeshHierarchy:
    """Build levels ``0..L`` by uniform refinement of a Cartesian coarse grid.

    Parameters
    ----------
    domain_bounds : tuple
        ``(x_min, x_max, y_min, y_max)``.
    L : int
        Finest level index.
    coarse_cells : tuple
        Number of coarse cells per direction on level 0.
    """
    x0, x1, y0, y1 = map(float, domain_bounds)
    if L < 0:
        raise ValueError(f"level count must be non-negative, got {L}")
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain_bounds}")
    nx0, ny0 = coarse_cells
    if nx0 < 1 or ny0 < 1:
        raise ValueError("coarse mesh needs at least one cell")
    bounds = (x0, x1, y0, y1)
    levels = [MeshLevel(l, bounds, nx0 * 2**l, ny0 * 2**l) for l in range(L + 1)]
    return MeshHierarchy(bounds, levels)
