"""Divergence-free virtual elements of order 2 for the incompressible
Navier-Stokes equations, solved by Arrow-Hurwicz iteration."""

__version__ = "0.1.0"

from .assembly import assemble_global, build_dofmap  # noqa: E402,F401
from .benchmarks import get_benchmark  # noqa: E402,F401
from .mesh import PolygonalMesh, generate_structured, generate_voronoi, load_mesh, parse_mesh_spec  # noqa: E402,F401
from .solver import AHParams, SolverError, ah_solve  # noqa: E402,F401
