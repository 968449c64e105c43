"""Numerical laboratory for bouncing Jacobi fields on a closed geodesic.

The pipeline goes: curvature profile -> bouncing Jacobi field (critical point
of the segment-energy sum H_n) -> Jacobi-Toda profile glued from Toda cores ->
two-layer Allen-Cahn solution on a Fermi tube, with spectral bookkeeping
(Morse index, nullity, gaps) checked at every stage.
"""

__version__ = "0.1.0"

from . import numerics, geometry, jacobi, bouncing, toda, jacobitoda, allencahn

__all__ = [
    "numerics",
    "geometry",
    "jacobi",
    "bouncing",
    "toda",
    "jacobitoda",
    "allencahn",
    "__version__",
]
