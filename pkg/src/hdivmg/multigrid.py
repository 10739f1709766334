"""V-cycle preconditioners for the mixed and the penalized elliptic problem."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import BlockOperator, LevelOperators, PenaltyConfig, assemble_level
from .element import reference_basis
from .mesh import MeshHierarchy
from .smoother import ELLIPTIC, MIXED, SchwarzSmoother, SmootherConfig, build_patch_solvers
from .transfer import build_prolongation

log = logging.getLogger(__name__)

STANDARD = "standard"
VARIABLE = "variable"


def schedule(cycle: str, m_L: int, L: int) -> list[int]:
    """Smoothing steps ``m(l)`` for ``l = 0..L``."""
    if m_L < 1:
        raise ValueError("need at least one smoothing step on the finest level")
    if cycle == STANDARD:
        return [m_L] * (L + 1)
    if cycle == VARIABLE:
        return [m_L * 2 ** (L - l) for l in range(L + 1)]
    raise ValueError(f"unknown cycle {cycle!r}")


class CoarseSolver:
    """Direct solve on level 0; the mixed system is bordered with the global pressure mean."""

    def __init__(self, matrix, mean_weights=None):
        matrix = sp.csc_matrix(matrix)
        self.size = matrix.shape[0]
        if mean_weights is not None:
            w = sp.csr_matrix(mean_weights[None, :])
            matrix = sp.bmat([[matrix, w.T], [w, None]], format="csc")
        self.bordered = mean_weights is not None
        self._lu = spla.splu(matrix) if matrix.shape[0] else None

    def __call__(self, rhs):
        if self._lu is None:
            return np.zeros(self.size)
        if self.bordered:
            rhs = np.append(rhs, 0.0)
        return self._lu.solve(rhs)[: self.size]


@dataclass(eq=False)
class LevelData:
    ops: LevelOperators
    operator: object  # BlockOperator (mixed) or csr matrix (elliptic)
    matrix: sp.csr_matrix
    smoother: SchwarzSmoother | None = None
    prolongation: sp.csr_matrix | None = None  # from level - 1 into this level


@dataclass(eq=False)
class MultigridContext:
    levels: list[LevelData]
    coarse: CoarseSolver
    steps: list[int]
    variant: str = MIXED
    epsilon: float = 0.0
    project_mean: bool = True
    _mean: tuple = field(default=None, repr=False)

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def finest(self) -> LevelData:
        return self.levels[-1]

    def vcycle(self, level: int, rhs: np.ndarray) -> np.ndarray:
        if level == 0:
            return self.coarse(rhs)
        data = self.levels[level]
        K, smooth, m = data.matrix, data.smoother, self.steps[level]
        x = np.zeros_like(rhs)
        for _ in range(m):
            x += smooth(rhs - K @ x)
        P = data.prolongation
        x += P @ self.vcycle(level - 1, P.T @ (rhs - K @ x))
        for _ in range(m):
            x += smooth(rhs - K @ x)
        return x

    def apply_preconditioner(self, r: np.ndarray) -> np.ndarray:
        x = self.vcycle(self.L, r)
        if self.variant == MIXED and self.project_mean:
            x = self.remove_pressure_mean(x)
        return x

    __call__ = apply_preconditioner

    def remove_pressure_mean(self, x: np.ndarray) -> np.ndarray:
        dofs = self.finest.ops.dofs
        if self._mean is None:
            w, one = dofs.pressure_mean_weights, dofs.pressure_constant
            self._mean = (w, one / (w @ one))
        w, one = self._mean
        x = x.copy()
        p = x[dofs.n_free :]
        p -= (w @ p) * one
        return x

    def operator_apply(self, x):
        return self.finest.matrix @ x


def build_level_operators(hierarchy: MeshHierarchy, k: int, penalty: PenaltyConfig) -> list[LevelOperators]:
    basis = reference_basis(k)
    return [assemble_level(hierarchy[l], basis, penalty) for l in range(hierarchy.L + 1)]


def build_multigrid(
    level_ops: list[LevelOperators],
    cycle: str = VARIABLE,
    m_L: int = 1,
    smoother: SmootherConfig = SmootherConfig(),
    epsilon: float = 0.0,
    project_mean: bool = True,
    prolongations=None,
) -> MultigridContext:
    """Set up operators, patch smoothers and transfers on every level.

    ``smoother.variant`` selects the mixed operator ``[[A, B^T], [-B, eps M]]``
    or the elliptic operator ``A + D / eps``.
    """
    mixed = smoother.variant == MIXED
    if not mixed and epsilon <= 0:
        raise ValueError("the elliptic variant needs epsilon > 0")
    L = len(level_ops) - 1
    levels = []
    for l, ops in enumerate(level_ops):
        if mixed:
            op = ops.mixed(epsilon)
            mat, transfer = op.matrix, (lambda P: P.mixed)
        else:
            op = ops.elliptic(epsilon)
            mat, transfer = op, (lambda P: P.velocity)
        data = LevelData(ops, op, mat)
        if l > 0:
            data.smoother = build_patch_solvers(ops.dofs, op, smoother)
            P = prolongations[l - 1] if prolongations else build_prolongation(level_ops[l - 1].dofs, ops.dofs)
            data.prolongation = transfer(P)
        levels.append(data)
        log.debug("multigrid level %d ready (%d unknowns)", l, mat.shape[0])

    coarse_ops = level_ops[0]
    weights = None
    if mixed:
        weights = np.concatenate([np.zeros(coarse_ops.dofs.n_free), coarse_ops.dofs.pressure_mean_weights])
    coarse = CoarseSolver(levels[0].matrix, weights)
    return MultigridContext(
        levels=levels,
        coarse=coarse,
        steps=schedule(cycle, m_L, L),
        variant=smoother.variant,
        epsilon=epsilon,
        project_mean=project_mean,
    )


__all__ = [
    "ELLIPTIC",
    "MIXED",
    "STANDARD",
    "VARIABLE",
    "BlockOperator",
    "CoarseSolver",
    "MultigridContext",
    "build_level_operators",
    "build_multigrid",
    "schedule",
]
