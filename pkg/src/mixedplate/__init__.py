"""Stabilized mixed finite elements for fourth-order plate problems.

The package assembles and solves a mixed formulation of the biharmonic and
von Karman equations in which the gradient w = grad u is approximated in
BDM or vector Lagrange spaces and u in continuous Lagrange spaces.
"""
from .assembly import Coefficient, SchemeParams
from .mesh import Mesh, domain_mesh, generate_lshape_mesh, generate_square_mesh, uniform_refine

__all__ = ["Coefficient", "SchemeParams", "Mesh", "domain_mesh", "generate_lshape_mesh",
           "generate_square_mesh", "uniform_refine"]
__version__ = "0.1.0"
