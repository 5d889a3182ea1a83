"""Finite element solvers for incompressible channel flow.

Contains two discretizations of the incompressible Navier-Stokes
equations (continuous Taylor-Hood elements and an exactly
divergence-free H(div)-conforming hybrid DG method), eddy-viscosity
turbulence closures (K-epsilon, K-omega variants, K-omega SST,
Smagorinsky LES, projection-based VMS), a first order IMEX time
stepper, and a turbulence statistics pipeline for channel flow.
"""

__version__ = "0.1.0"
