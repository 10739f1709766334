"""Additive Schwarz smoothers on vertex patches.

Every patch gets a dense inverse of the operator restricted to its
unknowns. For the mixed operator the local system is bordered with one
Lagrange multiplier that pins the patch mean of the pressure to zero; the
multiplier is discarded, so only the leading block of the bordered inverse
is stored. Patches are grouped by local size and applied with batched
matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import BlockOperator
from .dof import DofMap, PatchDofSet, patch_dofs

MIXED = "mixed"
ELLIPTIC = "elliptic"


@dataclass(frozen=True)
class SmootherConfig:
    eta: float = 0.5
    variant: str = MIXED
    boundary_patches: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("relaxation factor must be positive")
        if self.variant not in (MIXED, ELLIPTIC):
            raise ValueError(f"unknown smoother variant {self.variant!r}")


def dense_blocks(mat: sp.csr_matrix, index: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Dense sub-matrices ``mat[index[p]][:, index[p]]`` for a stack of index sets."""
    mat = sp.csr_matrix(mat)
    mat.sum_duplicates()
    mat.sort_indices()
    n = mat.shape[1]
    out = np.zeros(index.shape + index.shape[-1:])
    if mat.nnz == 0:
        return out
    rows = np.repeat(np.arange(mat.shape[0], dtype=np.int64), np.diff(mat.indptr))
    keys = rows * n + mat.indices
    for start in range(0, len(index), chunk):
        idx = index[start : start + chunk].astype(np.int64)
        want = idx[:, :, None] * n + idx[:, None, :]
        pos = np.minimum(np.searchsorted(keys, want), len(keys) - 1)
        out[start : start + chunk] = np.where(keys[pos] == want, mat.data[pos], 0.0)
    return out


@dataclass(eq=False)
class PatchGroup:
    """Patches with the same number of local unknowns."""

    index: np.ndarray  # (n_patches, n_local) into the level unknowns
    inverse: np.ndarray  # (n_patches, n_local, n_local)


@dataclass(eq=False)
class PatchSolver:
    """Local data of one patch (kept for inspection and tests)."""

    dofs: PatchDofSet
    index: np.ndarray
    inverse: np.ndarray
    constraint: np.ndarray | None


class SchwarzSmoother:
    """``eta * sum_v E_v (E_v^T K E_v)^{-1} E_v^T`` over vertex patches."""

    def __init__(self, groups: list[PatchGroup], size: int, eta: float, patches: list[PatchSolver]):
        self.groups = groups
        self.size = size
        self.eta = eta
        self.patches = patches

    def apply(self, residual: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        for g in self.groups:
            local = np.matmul(g.inverse, residual[g.index][:, :, None])[:, :, 0]
            out += np.bincount(g.index.ravel(), weights=local.ravel(), minlength=self.size)
        return self.eta * out

    __call__ = apply

    def as_dense(self) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(self.size)])


def _local_index(dofs: DofMap, pd: PatchDofSet, mixed: bool):
    if mixed:
        return np.concatenate([pd.velocity_free, dofs.n_free + pd.pressure_dofs])
    return pd.velocity_free


def build_patch_solvers(dofs: DofMap, operator, config: SmootherConfig = SmootherConfig()) -> SchwarzSmoother:
    """Factor the local problems of all vertex patches of one level.

    ``operator`` is a :class:`BlockOperator` for the mixed variant or the
    sparse elliptic matrix on the free velocities.
    """
    mixed = config.variant == MIXED
    if mixed != isinstance(operator, BlockOperator):
        raise TypeError("mixed smoother needs a BlockOperator, elliptic smoother a sparse matrix")
    mat = operator.matrix if mixed else sp.csr_matrix(operator)
    size = mat.shape[0]

    patch_sets = [patch_dofs(dofs, p) for p in dofs.mesh.vertex_patches(config.boundary_patches)]
    indices = [_local_index(dofs, pd, mixed) for pd in patch_sets]
    by_shape: dict[tuple[int, int], list[int]] = {}
    for n, idx in enumerate(indices):
        by_shape.setdefault((len(patch_sets[n].velocity_free), len(idx)), []).append(n)

    groups, solvers = [], [None] * len(patch_sets)
    for (nv, n_local), members in sorted(by_shape.items()):
        if n_local == 0:
            continue
        index = np.stack([indices[m] for m in members])
        cons = None
        if mixed:
            cons = np.zeros((len(members), n_local))
            cons[:, nv:] = np.stack([patch_sets[m].mean_constraint for m in members])
        inverse = np.empty((len(members), n_local, n_local))
        for start in range(0, len(members), _CHUNK):
            part = slice(start, start + _CHUNK)
            local = dense_blocks(mat, index[part])
            if mixed:
                inverse[part] = _invert(_border(local, cons[part]))[:, :n_local, :n_local]
            else:
                inverse[part] = _invert(local)
        groups.append(PatchGroup(index, inverse))
        for j, m in enumerate(members):
            solvers[m] = PatchSolver(patch_sets[m], index[j], inverse[j], None if cons is None else cons[j])
    return SchwarzSmoother(groups, size, config.eta, [s for s in solvers if s is not None])


_CHUNK = 512


def local_matrices(smoother: SchwarzSmoother, operator) -> list[np.ndarray]:
    """Unbordered local matrices of every patch, in patch order."""
    mat = operator.matrix if isinstance(operator, BlockOperator) else sp.csr_matrix(operator)
    return [dense_blocks(mat, p.index[None])[0] for p in smoother.patches]


def _border(local: np.ndarray, cons: np.ndarray) -> np.ndarray:
    n = local.shape[-1]
    out = np.zeros((len(local), n + 1, n + 1))
    out[:, :n, :n] = local
    out[:, :n, n] = cons
    out[:, n, :n] = cons
    return out


def _invert(stack: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(stack)
    check = np.matmul(stack, inv) - np.eye(stack.shape[-1])
    err = np.abs(check).max(axis=(1, 2)) if len(stack) else np.zeros(0)
    if np.any(~np.isfinite(err)) or np.any(err > 1e-6):
        bad = int(np.argmax(np.where(np.isfinite(err), err, np.inf)))
        raise np.linalg.LinAlgError(f"singular patch matrix (patch {bad} in its group, residual {err[bad]:.2e})")
    return inv
