"""Numerical laboratory for overdetermined elliptic problems and their quantitative stability.

Modules
-------
geometry     polygonal domains, meshing, boundary measures
assembly     P1 finite elements, constrained solves, flux recovery
singular     punctured-domain problem by singularity splitting; N = 3 ball
functionals  isoperimetric deficit, Fraenkel / strong asymmetry, stability report
pfunction    boundary identities and the N = 3 P-function checks
cone         sector mean values, torsion duality, cone Poincaré bound
poincare     weighted Poincaré, trace and vector-field constants; inequality audits
cli          ``overdet-lab`` command line
"""
from __future__ import annotations

__version__ = "0.1.0"
