"""Glued construction and Newton solve of the periodic Jacobi-Toda equation

    eps^2 (Psi'' + K Psi) = cbar^2 exp(-2 Psi)   on the circle,

together with the spectrum of its linearization

    L_eps = -eps^2 (d2 + K) - 2 cbar^2 exp(-2 Psi).

The initial guess glues the outer branch alpha_eps * Phi (Phi a bouncing
Jacobi field, alpha_eps exp(alpha_eps) = 1/eps) to one explicit Toda bounce
per minimum, with leading-order parameters

    kappa_j = eps alpha_eps N_j / 2,   sbar_j = s_j,
    delta_j = -ln(N_j / cbar) / alpha_eps,   theta_j = 0,

blended by a smooth partition of unity of half-width r_match =
alpha_eps^(-2/3).  A single damped Newton iteration on the periodic
collocation system replaces the two-stage outer/inner fixed-point chain;
the matching parameters are recovered afterwards by fitting the converged
profile, so the reported bounds on (kappa_j, sbar_j, delta_j, theta_j) are
measured rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import numerics, toda
from .bouncing import BouncingField
from .geometry import CurvatureProfile

RESIDUAL_TOL = 1e-10
CONTINUATION_RATIO = 0.8
MIN_NEWTON_STEP = 2.0 ** -20
# Zero-eigenvalue band for the eps^2-scaled spectra: well below the spectral
# gap c*eps^2 and far above factorization noise.
SPECTRUM_ZERO_BAND_FACTOR = 1e-3


class GluingRegimeError(RuntimeError):
    """eps too large for direct gluing; use the continuation entry point."""


class ContinuationStallError(RuntimeError):
    """Continuation ladder failed; carries the last solvable eps.

    The bounce branch of the Jacobi-Toda equation only exists for eps below
    a profile-dependent fold (for constant K it closes where the center
    frequency sqrt(K (2 Psi* + 1)) of the phase-plane well drops below
    2 pi n / L); requests beyond the fold stall here with the last good eps
    attached."""

    def __init__(self, message, last_good_eps=None, last_good_solution=None):
        super().__init__(message)
        self.last_good_eps = last_good_eps
        self.last_good_solution = last_good_solution


@dataclass
class GlueParameters:
    """Per-minimum matching data (kappa_j, sbar_j, delta_j, theta_j) plus the
    matching radius and, after fitting, the measured bound constants."""

    kappa: np.ndarray
    sbar: np.ndarray
    delta: np.ndarray
    theta: np.ndarray
    r_match: float
    fitted_constants: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "kappa": [float(v) for v in self.kappa],
            "sbar": [float(v) for v in self.sbar],
            "delta": [float(v) for v in self.delta],
            "theta": [float(v) for v in self.theta],
            "r_match": self.r_match,
            "fitted_constants": {k: float(v) for k, v in self.fitted_constants.items()},
        }


@dataclass
class JacobiTodaSolution:
    epsilon: float
    grid: np.ndarray
    psi: np.ndarray
    residual_norm: float
    glue: GlueParameters
    field: BouncingField
    newton_iterations: int = 0
    continuation_path: list = None

    @property
    def profile(self) -> CurvatureProfile:
        return self.field.profile

    @property
    def alpha(self) -> float:
        return numerics.lambert_alpha(self.epsilon)

    def minima(self) -> tuple[np.ndarray, np.ndarray]:
        """(locations, values) of the local minima, quadratically refined."""
        psi, s = self.psi, self.grid
        n = psi.size
        h = s[1] - s[0]
        prev, nxt = np.roll(psi, 1), np.roll(psi, -1)
        idx = np.where((psi < prev) & (psi < nxt))[0]
        locs, vals = [], []
        for i in idx:
            a = (prev[i] + nxt[i] - 2 * psi[i]) / 2
            b = (nxt[i] - prev[i]) / 2
            dx = -b / (2 * a) if a > 0 else 0.0
            locs.append(s[i] + dx * h)
            vals.append(psi[i] + b * dx + a * dx * dx)
        return np.asarray(locs), np.asarray(vals)


def default_grid_size(field: BouncingField, epsilon: float,
                      points_per_core: int = 40, nmin: int = 4096) -> int:
    """Grid fine enough that each Toda core (width eps/kappa_j) holds the
    requested number of points."""
    alpha = numerics.lambert_alpha(epsilon)
    kappa_over_eps = alpha * field.jumps / 2.0
    n = int(math.ceil(points_per_core * field.profile.length * kappa_over_eps.max()))
    return max(nmin, n)


def _smoothstep(x):
    """C^2 quintic ramp: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


def gluing_feasible(field: BouncingField, epsilon: float) -> bool:
    """Direct gluing needs the blend bumps (radius 2 r_match) disjoint."""
    alpha = numerics.lambert_alpha(epsilon)
    r_match = alpha ** (-2.0 / 3.0)
    gaps = np.diff(np.append(field.points, field.points[0] + field.profile.length))
    return 4.0 * r_match <= gaps.min()


def glue_initial_guess(field: BouncingField, epsilon: float,
                       grid: np.ndarray | None = None):
    """Leading-order glued profile and its parameters.

    Outer branch: alpha * Phi_tilde with Phi_tilde re-solving each segment
    BVP with end values 1 + delta_j; inner branches: explicit Toda bounces
    with the curvature correction; blended by quintic bumps supported in
    |s - sbar_j| <= 2 r_match."""
    from .jacobi import segment_energy

    if not gluing_feasible(field, epsilon):
        raise GluingRegimeError(
            "eps too large for gluing; use continuation entry point")
    profile = field.profile
    length = profile.length
    alpha = numerics.lambert_alpha(epsilon)
    cb = toda.cbar()
    n = field.n
    jumps = field.jumps
    kappa = epsilon * alpha * jumps / 2.0
    sbar = field.points.copy()
    delta = -np.log(jumps / cb) / alpha
    theta = np.zeros(n)
    r_match = alpha ** (-2.0 / 3.0)
    params = GlueParameters(kappa, sbar, delta, theta, r_match)

    if grid is None:
        nsz = default_grid_size(field, epsilon)
        grid = length * np.arange(nsz) / nsz

    # Outer: per-segment BVP with boundary values 1 + delta at the minima,
    # scaled by alpha.
    outer = np.empty_like(grid)
    ends = np.append(field.points, field.points[0] + length)
    rel = np.mod(grid - field.points[0], length) + field.points[0]
    idx = np.searchsorted(field.points, rel, side="right") - 1
    for j in range(n):
        mask = idx == j
        if not np.any(mask):
            continue
        a, b = ends[j], ends[j + 1]
        _, seg = segment_energy(profile, a, b)
        # minimizer of the unit problem u0; correction solves the same ODE
        # with boundary values delta_j, delta_{j+1}: reuse the dense basis.
        sol = seg._dense
        y = sol.sol(rel[mask])
        u, v = y[0], y[2]
        u_end, _, v_end, _ = sol.y[:, -1]
        d_l, d_r = delta[j], delta[(j + 1) % n]
        # phi with phi(a) = 1 + d_l, phi(b) = 1 + d_r
        aa = 1.0 + d_l
        bb = (1.0 + d_r - aa * u_end) / v_end
        outer[mask] = alpha * (aa * u + bb * v)

    guess = outer.copy()
    for j in range(n):
        dist = rel - sbar[j]
        dist -= length * np.round(dist / length)
        mask = np.abs(dist) < 2.0 * r_match
        if not np.any(mask):
            continue
        prof_j = toda.TodaProfile(kappa[j], 0.0, epsilon,
                                  float(profile.kappa(sbar[j])))
        t0, _ = toda.toda_profile_eval(prof_j, dist[mask])
        chi = 1.0 - _smoothstep((np.abs(dist[mask]) - r_match) / r_match)
        guess[mask] = chi * t0 + (1.0 - chi) * guess[mask]
    return guess, params


def _newton_solve(profile, grid, epsilon, psi0, cbar_sq, max_iter=60):
    n = grid.size
    h = profile.length / n
    k = profile.kappa(grid)
    e2 = epsilon * epsilon

    def residual(psi):
        lap = (np.roll(psi, -1) - 2.0 * psi + np.roll(psi, 1)) / h ** 2
        with np.errstate(over="ignore"):
            # overflow -> inf residual on a rejected trial step is fine
            return e2 * (lap + k * psi) - cbar_sq * np.exp(-2.0 * psi)

    psi = psi0.copy()
    f = residual(psi)
    fnorm = np.abs(f).max()
    it = 0
    for it in range(1, max_iter + 1):
        tol = RESIDUAL_TOL * max(1.0, np.abs(psi).max())
        if fnorm <= tol:
            break
        diag = -2.0 * e2 / h ** 2 + e2 * k + 2.0 * cbar_sq * np.exp(-2.0 * psi)
        off = e2 / h ** 2
        jac = scipy.sparse.diags(
            [np.full(n - 1, off), diag, np.full(n - 1, off)],
            offsets=(-1, 0, 1), format="lil")
        jac[0, n - 1] = off
        jac[n - 1, 0] = off
        step = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(jac)).solve(-f)
        lam = 1.0
        while lam >= MIN_NEWTON_STEP:
            cand = psi + lam * step
            fc = residual(cand)
            fcn = np.abs(fc).max()
            if fcn < fnorm * (1.0 - 0.25 * lam) or fcn <= tol:
                psi, f, fnorm = cand, fc, fcn
                break
            lam *= 0.5
        else:
            return psi, fnorm, it, False
    converged = fnorm <= RESIDUAL_TOL * max(1.0, np.abs(psi).max())
    return psi, fnorm, it, converged


def solve_jacobi_toda(field: BouncingField, epsilon: float,
                      guess: np.ndarray | None = None,
                      grid_size: int | None = None) -> JacobiTodaSolution:
    """Damped Newton on the periodic collocation system, seeded by the glued
    guess; falls back to a downward continuation ladder (ratio 0.8) when eps
    is above the direct-gluing regime."""
    profile = field.profile
    length = profile.length
    nsz = grid_size or default_grid_size(field, epsilon)
    grid = length * np.arange(nsz) / nsz
    cbar_sq = toda.interaction_constants().cbar_sq

    path = []
    if guess is None:
        if gluing_feasible(field, epsilon):
            guess, _ = glue_initial_guess(field, epsilon, grid)
        else:
            # Build the ladder downward until gluing works, then walk back up.
            ladder = [epsilon]
            while not gluing_feasible(field, ladder[-1]):
                ladder.append(ladder[-1] * CONTINUATION_RATIO)
                if ladder[-1] < 1e-8:
                    raise ContinuationStallError("no glueable eps found above 1e-8")
            ladder = ladder[::-1]
            psi, _ = glue_initial_guess(field, ladder[0], grid)
            last_good = None
            for eps_k in ladder[:-1]:
                cand, fnorm, _, ok = _newton_solve(profile, grid, eps_k, psi, cbar_sq)
                if not ok:
                    # Refine the ladder toward the fold before giving up.
                    cur = path[-1] if path else None
                    raise ContinuationStallError(
                        f"continuation stalled at eps={eps_k:.6g} "
                        f"(residual {fnorm:.3e}); last good eps "
                        f"{cur if cur is not None else 'none'}",
                        last_good_eps=cur, last_good_solution=last_good)
                psi = cand
                last_good = (eps_k, psi.copy())
                path.append(eps_k)
            guess = psi
    psi, fnorm, iters, ok = _newton_solve(profile, grid, epsilon, guess, cbar_sq)
    if not ok:
        # Walk up in small multiplicative steps to bracket the fold and
        # report the largest solvable eps.
        eps_cur = path[-1] if path else None
        psi_cur = guess
        if eps_cur is not None:
            while eps_cur < epsilon * (1.0 - 1e-9):
                eps_try = min(eps_cur * 1.02, epsilon)
                cand, fn2, _, ok2 = _newton_solve(profile, grid, eps_try, psi_cur,
                                                  cbar_sq)
                if not ok2:
                    break
                eps_cur, psi_cur = eps_try, cand
            if eps_cur >= epsilon * (1.0 - 1e-9):
                psi, fnorm, iters, ok = psi_cur, 0.0, 0, True
        if not ok:
            raise ContinuationStallError(
                f"Newton failed at eps={epsilon:.6g} (residual {fnorm:.3e}); "
                f"last good eps {eps_cur}",
                last_good_eps=eps_cur,
                last_good_solution=(eps_cur, psi_cur) if eps_cur else None)
    sol = JacobiTodaSolution(epsilon, grid, psi, float(fnorm),
                             GlueParameters(np.zeros(field.n), np.zeros(field.n),
                                            np.zeros(field.n), np.zeros(field.n),
                                            0.0),
                             field, iters, path)
    if np.any(psi <= 0):
        raise RuntimeError("converged profile is not positive")
    locs, _ = sol.minima()
    if locs.size != field.n:
        raise RuntimeError(
            f"expected {field.n} minima, found {locs.size}; refine the grid")
    sol.glue = fit_glue_parameters(sol)
    return sol


def _psi_deriv(sol: JacobiTodaSolution) -> np.ndarray:
    h = sol.grid[1] - sol.grid[0]
    return (np.roll(sol.psi, -1) - np.roll(sol.psi, 1)) / (2.0 * h)


def _interp_periodic(grid, vals, length, x):
    return np.interp(np.mod(x, length), np.append(grid, length),
                     np.append(vals, vals[0]))


def fit_glue_parameters(sol: JacobiTodaSolution) -> GlueParameters:
    """Recover the matching parameters from the converged profile.

    kappa_j from the Toda minimum relation Psi(sbar_j) = ln(cbar/kappa_j);
    delta_j from the outer/inner constant matching
    alpha (1 + delta_j) = -ln(2 kappa_j / cbar); theta_j from the symmetric
    part of the outer slopes at distance r_match.  The fitted constants
    report the measured sizes |kappa_j/eps - alpha N_j/2|,
    alpha^2 |delta_j + ln(N_j/cbar)/alpha|, alpha^2 |theta_j| and
    alpha |sbar_j - s_j|."""
    field = sol.field
    eps = sol.epsilon
    alpha = sol.alpha
    cb = toda.cbar()
    length = field.profile.length
    locs, vals = sol.minima()
    # pair each field point with the nearest minimum (cyclically)
    sbar = np.empty(field.n)
    for j, s_j in enumerate(field.points):
        d = np.abs(locs - s_j)
        d = np.minimum(d, length - d)
        sbar[j] = locs[np.argmin(d)]
    vals_at = _interp_periodic(sol.grid, sol.psi, length, sbar)
    kappa = cb * np.exp(-vals_at)
    delta = -(np.log(2.0 * kappa / cb) + alpha) / alpha
    r = alpha ** (-2.0 / 3.0)
    dpsi = _psi_deriv(sol)
    theta = np.empty(field.n)
    for j in range(field.n):
        # The explicit bounce has odd slope plus an odd curvature ramp, so
        # its slope-sum at +-r vanishes; the sum of the measured slopes is
        # the outer asymmetry theta_j (per unit alpha).
        sp = _interp_periodic(sol.grid, dpsi, length, sbar[j] + r)
        sm = _interp_periodic(sol.grid, dpsi, length, sbar[j] - r)
        theta[j] = (sp + sm) / alpha
    jumps = field.jumps
    dsb = np.abs(sbar - field.points)
    dsb = np.minimum(dsb, length - dsb)
    fitted = {
        "C_kappa": float(np.abs(kappa / eps - alpha * jumps / 2.0).max()),
        "C_delta": float((alpha ** 2 * np.abs(delta + np.log(jumps / cb) / alpha)).max()),
        "C_theta": float((alpha ** 2 * np.abs(theta)).max()),
        "C_sbar": float((alpha * dsb).max()),
    }
    return GlueParameters(kappa, sbar, delta, theta, r, fitted)


def outer_deviation(sol: JacobiTodaSolution, margin: float | None = None) -> float:
    """max |Psi/alpha - Phi| over points at distance >= margin from every
    minimum (default margin: a quarter of the smallest gap)."""
    field = sol.field
    length = field.profile.length
    gaps = np.diff(np.append(field.points, field.points[0] + length))
    if margin is None:
        margin = 0.25 * gaps.min()
    dist = np.full(sol.grid.size, np.inf)
    for s_j in field.points:
        d = np.abs(sol.grid - s_j)
        d = np.minimum(d, length - d)
        dist = np.minimum(dist, d)
    mask = dist >= margin
    phi_vals = field.phi(sol.grid[mask])
    return float(np.abs(sol.psi[mask] / sol.alpha - phi_vals).max())


def linearization_matrix(sol: JacobiTodaSolution,
                         grid_size: int | None = None) -> numerics.BandedSymmetricMatrix:
    """Periodic banded discretization of -eps^2 (d2 + K) - 2 cbar^2 e^(-2 Psi)."""
    profile = sol.field.profile
    if grid_size is None or grid_size == sol.grid.size:
        grid, psi = sol.grid, sol.psi
    else:
        grid = profile.length * np.arange(grid_size) / grid_size
        psi = _interp_periodic(sol.grid, sol.psi, profile.length, grid)
    n = grid.size
    h = profile.length / n
    e2 = sol.epsilon ** 2
    cbar_sq = toda.interaction_constants().cbar_sq
    bands = np.zeros((2, n))
    bands[0] = 2.0 * e2 / h ** 2 - e2 * profile.kappa(grid) \
        - 2.0 * cbar_sq * np.exp(-2.0 * psi)
    bands[1] = -e2 / h ** 2
    corner = np.array([[-e2 / h ** 2]])
    return numerics.BandedSymmetricMatrix(n, 1, bands, corner)


def jt_linearized_spectrum(sol: JacobiTodaSolution, k_deep: int | None = None,
                           k_near: int = 6) -> numerics.SpectrumReport:
    """Index, nullity and extreme eigenpairs of the linearized operator.

    Counts use the eps^2-scaled zero band and are confirmed on the solve
    grid and its refinement; the n most negative eigenvalues approach
    -kappa_j^2 (rescaled Toda ground states) and the gap reports
    min |lambda| / eps^2."""
    n_field = sol.field.n
    eps2 = sol.epsilon ** 2
    zero_band = SPECTRUM_ZERO_BAND_FACTOR * eps2
    counts = []
    for gsz in (sol.grid.size, 2 * sol.grid.size):
        if gsz == sol.grid.size:
            mat = linearization_matrix(sol)
        else:
            refined = solve_jacobi_toda(sol.field, sol.epsilon,
                                        guess=_interp_periodic(
                                            sol.grid, sol.psi,
                                            sol.field.profile.length,
                                            sol.field.profile.length
                                            * np.arange(gsz) / gsz),
                                        grid_size=gsz)
            mat = linearization_matrix(refined)
        counts.append(numerics.inertia(mat, 0.0, zero_band=zero_band))
    if counts[0][:2] != counts[1][:2]:
        raise numerics.EigensolverError(
            f"JT spectrum unresolved: {counts[0]} vs {counts[1]} on refined grid")
    neg, zero, pos = counts[0]
    mat = linearization_matrix(sol)
    k = max(k_deep or n_field, neg) + 2
    deep = numerics.smallest_eigenpairs(mat, k, zero_band=zero_band,
                                        gap_scale=eps2)
    # Nearest-zero eigenvalues for the gap diagnostic.
    sp = mat.to_sparse()
    v0 = np.full(mat.size, 1.0 / math.sqrt(mat.size))
    near_vals = scipy.sparse.linalg.eigsh(
        sp, k=k_near, sigma=0.0, which="LM", v0=v0,
        return_eigenvectors=False)
    gap = float(np.abs(near_vals).min()) / eps2
    report = numerics.SpectrumReport(neg, zero, pos, deep.eigenvalues,
                                     deep.eigenvectors, deep.residuals, gap,
                                     eps2)
    report.notes["near_zero_eigenvalues"] = [float(v) for v in np.sort(near_vals)]
    report.notes["deep_expected"] = [float(-kj ** 2) for kj in sol.glue.kappa]
    if zero > 0:
        report.notes["degenerate_flag"] = (
            "nullity candidates within the zero band; possible degenerate "
            "bouncing field upstream (constant-curvature rotation mode)")
    return report


def solve_sweep(field: BouncingField, eps_list, grid_size=None):
    """Solve for several eps (descending recommended), reusing solutions as
    continuation guesses when direct gluing is infeasible."""
    out = {}
    prev = None
    for eps in sorted(eps_list, reverse=True):
        if gluing_feasible(field, eps) or prev is None:
            out[eps] = solve_jacobi_toda(field, eps, grid_size=grid_size)
        else:
            guess = _interp_periodic(prev.grid, prev.psi, field.profile.length,
                                     (field.profile.length
                                      * np.arange(grid_size or default_grid_size(field, eps))
                                      / (grid_size or default_grid_size(field, eps))))
            out[eps] = solve_jacobi_toda(field, eps, guess=guess,
                                         grid_size=grid_size)
        prev = out[eps]
    return out
