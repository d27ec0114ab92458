"""Hybrid-dimensional Darcy flow in fractured porous media.

VAG (conforming and lumped) and HFV discretizations of a matrix coupled to a
planar fracture network with pressure jumps across the fractures, a
closed-form test family, an ILUT-preconditioned GMRES solver and a
convergence-study driver.
"""
from .assembly import (assemble, conservation_check, eliminate_cells, jacobian_nnz,
                       recover_cells)
from .errors import ErrorReport, compute_errors, convergence_orders
from .hfv import HfvScheme
from .mesh import build_bundle
from .model import make_case
from .solver import gmres, ilut_factor, solve
from .study import StudyConfig, run_study
from .vag import VagScheme

__all__ = [
    "assemble", "conservation_check", "eliminate_cells", "jacobian_nnz", "recover_cells",
    "ErrorReport", "compute_errors", "convergence_orders", "HfvScheme", "build_bundle",
    "make_case", "gmres", "ilut_factor", "solve", "StudyConfig", "run_study", "VagScheme",
]
