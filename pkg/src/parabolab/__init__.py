"""Numerical laboratory for fully nonlinear parabolic equations.

Solves du/dt - F(x, t, D^2 u) = f with a monotone explicit scheme and
measures regularity of the computed solutions: Holder/Campanato seminorms,
dyadic polynomial decay, Log-Lip moduli, Sobolev and p-BMO norms, and
paraboloid good-set decay, as functions of the ellipticity aperture.
"""

__version__ = "0.1.0"

from . import geometry, goodsets, operators, regularity, solver  # noqa: F401
