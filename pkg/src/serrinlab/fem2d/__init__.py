"""Two-dimensional finite elements on star-shaped domains of a space form."""

from .curves import FourierCurve
from .mesh import Mesh2D, PlanarDomain, build_mesh, read_mesh, write_mesh
from .solver import FEMSerrinSolver, FEMSolution, solve_fem
from .trace import BoundaryTrace, boundary_curvature, boundary_trace

__all__ = [
    "FourierCurve",
    "PlanarDomain",
    "Mesh2D",
    "build_mesh",
    "read_mesh",
    "write_mesh",
    "FEMSolution",
    "FEMSerrinSolver",
    "solve_fem",
    "BoundaryTrace",
    "boundary_trace",
    "boundary_curvature",
]
