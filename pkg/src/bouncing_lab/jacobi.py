"""Linear Jacobi machinery on segments of the geodesic.

The second-variation operator of length is -(d2/ds2 + K).  This module
integrates its initial value problems, solves the two-point problems
phi'' + K phi = 0 with phi = 1 at both ends by shooting, detects conjugate
points (where the segment energy drops to -infinity), and counts the index
of the periodic operator on the whole circle.

The segment energy is

    H(s1, s2) = inf { int (phi')^2 - K phi^2 : phi - 1 in H^1_0(s1, s2) }
              = phi'(s2) - phi'(s1)          (slopes of the minimizer),

finite exactly when the Dirichlet fundamental solution has no interior zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import numerics
from .geometry import CurvatureProfile

IVP_RTOL = 1e-12
IVP_ATOL = 1e-13
DEGENERATE_SHOOT_TOL = 1e-10


class DegenerateSegmentError(RuntimeError):
    """Conjugate point within tolerance of the segment end; shooting is singular."""


class UnresolvedSpectrumError(RuntimeError):
    """Spectral counts disagree between the two confirmation grids."""


def _rhs(profile):
    kappa = profile.kappa_scalar_fn()

    def rhs(s, y):
        k = kappa(s)
        # y = (u, u', v, v'); both columns solve phi'' = -K phi.
        return np.array([y[1], -k * y[0], y[3], -k * y[2]])
    return rhs


def _integrate_fundamental(profile: CurvatureProfile, s1: float, s2: float):
    """Dense solution of the fundamental pair u (1,0) and v (0,1) on [s1,s2]."""
    sol = solve_ivp(_rhs(profile), (s1, s2), np.array([1.0, 0.0, 0.0, 1.0]),
                    method="DOP853", rtol=IVP_RTOL, atol=IVP_ATOL,
                    dense_output=True)
    if not sol.success:
        raise RuntimeError(f"fundamental-pair integration failed: {sol.message}")
    return sol


def jacobi_ivp(profile: CurvatureProfile, s0: float, value: float, slope: float,
               s1: float) -> tuple[float, float]:
    """Integrate phi'' + K phi = 0 from (value, slope) at s0; returns the end state."""
    if s1 == s0:
        return value, slope
    sol = solve_ivp(_rhs(profile), (s0, s1), np.array([value, slope, 0.0, 1.0]),
                    method="DOP853", rtol=IVP_RTOL, atol=IVP_ATOL)
    if not sol.success:
        raise RuntimeError(f"IVP integration failed: {sol.message}")
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def first_conjugate_point(profile: CurvatureProfile, s1: float, s2: float,
                          dense_sol=None) -> float | None:
    """First interior zero of the Dirichlet fundamental solution v on (s1, s2).

    v oscillates no faster than sqrt(sup K), so a grid finer than a quarter
    of its half-period brackets every zero; each bracket is bisected on the
    dense output."""
    sol = dense_sol if dense_sol is not None else _integrate_fundamental(profile, s1, s2)
    _, sup_k = profile.sup_inf()
    freq = math.sqrt(max(sup_k, 0.0))
    npts = max(64, int(8 * freq * (s2 - s1) / math.pi) + 8)
    grid = np.linspace(s1, s2, npts)
    v = sol.sol(grid)[2]
    # Skip the zero at the left endpoint itself.
    interior = grid > s1 + 1e-12 * max(1.0, abs(s1))
    sign = np.sign(v)
    for i in range(1, npts):
        if not interior[i]:
            continue
        if sign[i] == 0.0:
            return float(grid[i])
        if sign[i - 1] != 0.0 and sign[i] != sign[i - 1] and interior[i - 1]:
            return float(brentq(lambda x: sol.sol(x)[2], grid[i - 1], grid[i],
                                xtol=1e-14))
    return None


@dataclass
class SegmentSolution:
    """Minimizer of the segment energy: phi'' + K phi = 0, phi = 1 at both ends."""

    s1: float
    s2: float
    grid: np.ndarray
    values: np.ndarray
    slope_left: float
    slope_right: float
    _dense: object = None

    def __call__(self, s):
        y = self._dense.sol(np.asarray(s, dtype=float))
        return y[0] + self._shoot_c * y[2]

    def derivative(self, s):
        y = self._dense.sol(np.asarray(s, dtype=float))
        return y[1] + self._shoot_c * y[3]


def segment_energy(profile: CurvatureProfile, s1: float, s2: float,
                   npoints: int = 129) -> tuple[float, SegmentSolution | None]:
    """(H, minimizer) of the segment; (-inf, None) past a conjugate point."""
    if not s1 < s2:
        raise ValueError("need s1 < s2")
    sol = _integrate_fundamental(profile, s1, s2)
    u_end, du_end, v_end, dv_end = sol.y[:, -1]
    conj = first_conjugate_point(profile, s1, s2, dense_sol=sol)
    if conj is not None and conj < s2 - DEGENERATE_SHOOT_TOL:
        return -math.inf, None
    if abs(v_end) <= DEGENERATE_SHOOT_TOL or conj is not None:
        raise DegenerateSegmentError(
            f"conjugate point within {DEGENERATE_SHOOT_TOL} of segment end "
            f"({s1}, {s2})")
    c = (1.0 - u_end) / v_end
    slope_left = c                      # u'(s1) = 0, v'(s1) = 1
    slope_right = du_end + c * dv_end
    grid = np.linspace(s1, s2, npoints)
    y = sol.sol(grid)
    seg = SegmentSolution(s1, s2, grid, y[0] + c * y[2], slope_left, slope_right,
                          _dense=sol)
    seg._shoot_c = c
    return float(slope_right - slope_left), seg


def slope_map(profile: CurvatureProfile, s1: float, s2: float) -> np.ndarray:
    """Dirichlet-to-slope map of the segment: boundary values (a, b) at
    (s1, s2) go to end slopes G @ (a, b).  G[1,0] = -G[0,1] by the Wronskian."""
    sol = _integrate_fundamental(profile, s1, s2)
    u_end, du_end, v_end, dv_end = sol.y[:, -1]
    if abs(v_end) <= DEGENERATE_SHOOT_TOL:
        raise DegenerateSegmentError(f"segment ({s1}, {s2}) is Dirichlet-singular")
    return np.array([[-u_end / v_end, 1.0 / v_end],
                     [du_end - u_end * dv_end / v_end, dv_end / v_end]])


def periodic_jacobi_matrix(profile: CurvatureProfile, n: int,
                           shift_origin: float = 0.0) -> numerics.BandedSymmetricMatrix:
    """Second-order periodic discretization of -(d2/ds2 + K) on n nodes."""
    h = profile.length / n
    s = shift_origin + h * np.arange(n)
    bands = np.zeros((2, n))
    bands[0] = 2.0 / h ** 2 - profile.kappa(s)
    bands[1] = -1.0 / h ** 2
    corner = np.array([[-1.0 / h ** 2]])
    return numerics.BandedSymmetricMatrix(n, 1, bands, corner)


def geodesic_index(profile: CurvatureProfile, nbase: int = 512,
                   k_eigen: int = 6) -> numerics.SpectrumReport:
    """Morse index and nullity of the geodesic: inertia of periodic -(d2+K).

    Counts are confirmed at nbase and 2*nbase grid points before reporting.
    """
    counts = []
    for n in (nbase, 2 * nbase):
        m = periodic_jacobi_matrix(profile, n)
        counts.append(numerics.inertia(m, 0.0))
    if counts[0][:2] != counts[1][:2]:
        raise UnresolvedSpectrumError(
            f"unresolved spectrum, refine: counts {counts[0]} at N={nbase} vs "
            f"{counts[1]} at N={2 * nbase}")
    m = periodic_jacobi_matrix(profile, 2 * nbase)
    k = min(k_eigen, (2 * nbase) // 4)
    report = numerics.smallest_eigenpairs(m, k)
    report.notes["grid_sizes"] = [nbase, 2 * nbase]
    return report
