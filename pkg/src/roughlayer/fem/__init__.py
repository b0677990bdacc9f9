"""Finite-element spaces, assembly and linear solvers."""
from .assembly import (assemble_operator, edge_load_vector, edge_mass_matrix, load_vector, mass_matrix,
                       robin_coupling, stiffness_matrix, supg_tau)
from .quadrature import line_rule, triangle_rule
from .solvers import CachedLUSolver, ReusedLUSolver, factorize, solve_sparse
from .spaces import DiscreteField, FunctionSpace, mesh_edges
from .stokes import SaddlePointSolver, StokesSystem, assemble_stokes, boundary_flux, solve_stokes

assemble_robin_coupling = robin_coupling

__all__ = [
    "FunctionSpace", "DiscreteField", "mesh_edges", "assemble_operator", "mass_matrix", "stiffness_matrix",
    "load_vector", "edge_mass_matrix", "edge_load_vector", "robin_coupling", "assemble_robin_coupling",
    "supg_tau", "triangle_rule", "line_rule", "solve_sparse", "factorize", "ReusedLUSolver", "CachedLUSolver",
    "SaddlePointSolver", "StokesSystem", "assemble_stokes", "solve_stokes", "boundary_flux",
]
