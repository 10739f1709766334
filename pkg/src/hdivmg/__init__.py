"""Geometric multigrid for H(div)-conforming interior penalty discretizations of Stokes flow.

RT_k velocities and discontinuous Q_k pressures on uniformly refined
Cartesian meshes, vertex-patch additive Schwarz smoothers and standard or
variable V-cycles used as preconditioners for Richardson or GMRES.
"""

from .assembly import INHERITED, NONINHERITED, BlockOperator, LevelOperators, PenaltyConfig, assemble_level
from .dof import DofMap, enumerate_dofs, patch_dofs
from .element import ReferenceBasis, reference_basis
from .krylov import SolveReport, gmres, richardson
from .mesh import MeshHierarchy, MeshLevel, build_hierarchy
from .multigrid import STANDARD, VARIABLE, MultigridContext, build_level_operators, build_multigrid, schedule
from .smoother import ELLIPTIC, MIXED, SchwarzSmoother, SmootherConfig, build_patch_solvers
from .transfer import Prolongation, build_prolongation

__version__ = "0.1.0"

__all__ = [
    "BlockOperator",
    "DofMap",
    "ELLIPTIC",
    "INHERITED",
    "LevelOperators",
    "MIXED",
    "MeshHierarchy",
    "MeshLevel",
    "MultigridContext",
    "NONINHERITED",
    "PenaltyConfig",
    "Prolongation",
    "ReferenceBasis",
    "STANDARD",
    "SchwarzSmoother",
    "SmootherConfig",
    "SolveReport",
    "VARIABLE",
    "assemble_level",
    "build_hierarchy",
    "build_level_operators",
    "build_multigrid",
    "build_patch_solvers",
    "build_prolongation",
    "enumerate_dofs",
    "gmres",
    "patch_dofs",
    "reference_basis",
    "richardson",
    "schedule",
]
