"""Bouncing Jacobi fields: critical points of the segment-energy sum H_n.

H_n(s_1..s_n) = sum_j H(s_j, s_{j+1}) over cyclically consecutive gaps
(s_{n+1} = s_1 + L).  Its exact first variation is

    dH_n/ds_j = (phi_j'(s_j))^2 - (phi_{j-1}'(s_j))^2,

the squared-slope mismatch of the two segment minimizers meeting at s_j, so
critical points are exactly the configurations where the minimizers reflect
(slope_+ = -slope_-) and glue to a continuous field Phi > 1 with upward
kinks.  The exact second variation follows from boundary-variation calculus
of the segment energy; in the scaled coordinates sigma_j = N_j sdot_j it
reduces, at a critical point, to the quadratic form built from the
odd-jump solutions eta with eta(s_j+) = -eta(s_j-) = sigma_j.

The same critical points are n-cycles of the first-return "bounce" map of
the obstacle problem: start at height 1 with slope p, follow the Jacobi flow
until the solution returns to 1, reflect.  In the coordinates (s, p^2/2)
this return map is exactly area preserving, which the Jacobian computation
below exploits as a cross-check.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import numerics
from .geometry import CurvatureProfile, Verdict, existence_precheck
from .jacobi import (DegenerateSegmentError, SegmentSolution,
                     _integrate_fundamental, segment_energy, slope_map)

GRADIENT_TOL = 1e-11
REFLECTION_TOL = 1e-8
MIN_GAP_FRACTION = 1e-3


class CollapseError(RuntimeError):
    """Optimizer iterates approached the boundary of the ordered simplex."""


class NonexistenceError(RuntimeError):
    """The requested field cannot exist (necessary condition violated)."""


class OrbitEscapeError(RuntimeError):
    """Bounce orbit failed to return to height 1 within one period."""


def _wrap_points(points: np.ndarray, length: float) -> np.ndarray:
    pts = np.sort(np.mod(np.asarray(points, dtype=float), length))
    return pts


def _check_ordered(points: np.ndarray, length: float):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 1:
        raise ValueError("points must be a nonempty 1-d array")
    gaps = np.diff(np.append(pts, pts[0] + length))
    if np.any(gaps <= 0):
        raise ValueError("points must be strictly ordered within one period")
    return gaps


@dataclass
class _SegmentData:
    h: float
    seg: SegmentSolution | None
    g: np.ndarray | None      # Dirichlet-to-slope map
    g_asym: float = 0.0


def _segments(profile: CurvatureProfile, points, need_maps=False):
    pts = np.asarray(points, dtype=float)
    n = pts.size
    _check_ordered(pts, profile.length)
    ends = np.append(pts, pts[0] + profile.length)
    out = []
    for j in range(n):
        h, seg = segment_energy(profile, ends[j], ends[j + 1])
        g = None
        asym = 0.0
        if need_maps and seg is not None:
            sol = seg._dense
            u_end, du_end, v_end, dv_end = sol.y[:, -1]
            g = np.array([[-u_end / v_end, 1.0 / v_end],
                          [du_end - u_end * dv_end / v_end, dv_end / v_end]])
            # Wronskian identity G[1,0] = -G[0,1]; the defect measures
            # integrator error and feeds the asymmetry diagnostic.
            asym = abs(g[1, 0] + g[0, 1])
        out.append(_SegmentData(h, seg, g, asym))
    return out


def hn_value(profile: CurvatureProfile, points) -> float:
    """Sum of segment energies; -inf when any gap has a conjugate point."""
    total = 0.0
    for sd in _segments(profile, points):
        if not math.isfinite(sd.h):
            return -math.inf
        total += sd.h
    return total


def hn_gradient(profile: CurvatureProfile, points) -> np.ndarray:
    """Exact gradient (phi_j')^2 - (phi_{j-1}')^2 evaluated at each point."""
    segs = _segments(profile, points)
    n = len(segs)
    if any(not math.isfinite(sd.h) for sd in segs):
        raise ValueError("hn_value is -inf at this configuration")
    grad = np.empty(n)
    for j in range(n):
        pa = segs[j].seg.slope_left
        pb = segs[j - 1].seg.slope_right
        grad[j] = pa * pa - pb * pb
    return grad


def hn_hessian_points(profile: CurvatureProfile, points):
    """Exact Hessian of H_n in point coordinates, any admissible configuration.

    Per segment with end slopes (pa, pb) and slope map G the second
    variation contributes
        d2H/da2 = -2 pa^2 G00 - 2 K(a) pa,   d2H/db2 = 2 pb^2 G11 + 2 K(b) pb,
        d2H/dadb = -2 pa pb G01,
    the curvature-derivative terms cancelling between adjacent segments.
    Returns (hessian, max_asymmetry_diagnostic)."""
    pts = np.asarray(points, dtype=float)
    n = pts.size
    segs = _segments(profile, pts, need_maps=True)
    if any(not math.isfinite(sd.h) for sd in segs):
        raise ValueError("hn_value is -inf at this configuration")
    ends = np.append(pts, pts[0] + profile.length)
    hess = np.zeros((n, n))
    asym = 0.0
    for j in range(n):
        g = segs[j].g
        pa, pb = segs[j].seg.slope_left, segs[j].seg.slope_right
        ka, kb = profile.kappa(ends[j]), profile.kappa(ends[j + 1])
        jp = (j + 1) % n
        hess[j, j] += -2.0 * pa * pa * g[0, 0] - 2.0 * ka * pa
        hess[jp, jp] += 2.0 * pb * pb * g[1, 1] + 2.0 * kb * pb
        cross = -2.0 * pa * pb * g[0, 1]
        hess[j, jp] += cross
        hess[jp, j] += cross
        asym = max(asym, 2.0 * abs(pa * pb) * segs[j].g_asym)
    return 0.5 * (hess + hess.T), asym


@dataclass
class BouncingField:
    """A piecewise Jacobi field touching 1 at n points with reflecting slopes."""

    profile: CurvatureProfile
    points: np.ndarray
    segments: list
    jumps: np.ndarray          # N_j = slope jump at s_j, positive
    index: int
    nullity: int
    hn_value: float

    @property
    def n(self) -> int:
        return self.points.size

    def slopes_right(self) -> np.ndarray:
        return np.array([seg.slope_left for seg in self.segments])

    def slopes_left(self) -> np.ndarray:
        return np.array([self.segments[j - 1].slope_right for j in range(self.n)])

    def phi(self, s):
        """Evaluate Phi piecewise (vectorized)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        length = self.profile.length
        rel = np.mod(s - self.points[0], length) + self.points[0]
        idx = np.searchsorted(self.points, rel, side="right") - 1
        out = np.empty_like(rel)
        for j in range(self.n):
            mask = idx == j
            if np.any(mask):
                out[mask] = self.segments[j](rel[mask])
        return out if out.size > 1 else float(out[0])

    def sample(self, m: int = 1024):
        s = np.linspace(0.0, self.profile.length, m, endpoint=False)
        return s, self.phi(s)

    def to_json(self) -> dict:
        return {
            "points": [float(x) for x in self.points],
            "jumps": [float(x) for x in self.jumps],
            "index": self.index,
            "nullity": self.nullity,
            "hn_value": self.hn_value,
        }


def hn_hessian(profile: CurvatureProfile, field: BouncingField):
    """Hessian of H_n at the field, in sigma coordinates sigma_j = N_j sdot_j.

    Congruence by diag(1/N_j) of the point-coordinate Hessian; inertia is
    unchanged.  Returns (matrix, asymmetry diagnostic)."""
    hess, asym = hn_hessian_points(profile, field.points)
    dinv = 1.0 / field.jumps
    return hess * np.outer(dinv, dinv), asym


def _field_from_points(profile: CurvatureProfile, points, gauge: bool,
                       npoints: int = 257) -> BouncingField:
    length = profile.length
    pts = _wrap_points(points, length)
    if gauge:
        pts = _wrap_points(pts - pts[0], length)
        pts[0] = 0.0
    n = pts.size
    ends = np.append(pts, pts[0] + length)
    segments = []
    total = 0.0
    for j in range(n):
        h, seg = segment_energy(profile, ends[j], ends[j + 1], npoints=npoints)
        if seg is None:
            raise CollapseError("configuration lost a finite segment during build")
        segments.append(seg)
        total += h
    slopes_right = np.array([seg.slope_left for seg in segments])
    slopes_left = np.array([segments[j - 1].slope_right for j in range(n)])
    reflect = np.abs(slopes_right + slopes_left)
    if np.any(reflect > REFLECTION_TOL):
        raise RuntimeError(
            f"slope reflection violated at convergence: max defect {reflect.max():.3e}")
    if np.any(slopes_right <= 0):
        raise RuntimeError("converged field has a non-positive right slope")
    jumps = slopes_right - slopes_left
    for seg in segments:
        interior = seg.values[1:-1]
        if interior.size and interior.min() < 1.0 - 1e-9:
            raise RuntimeError("converged field dips below 1 inside a segment")
    fld = BouncingField(profile, pts, segments, jumps, 0, 0, total)
    hess_sigma, _ = hn_hessian(profile, fld)
    neg, zero, _ = numerics.dense_inertia(hess_sigma)
    fld.index, fld.nullity = neg, zero
    return fld


def _ascent_gap_coordinates(profile, n, theta0, max_iter=120, gtol=1e-4):
    """Projected gradient ascent for H_n in unconstrained gap coordinates.

    theta = (base, w); gaps = L softmax(w), points = base + cumsum0(gaps).
    The ordering constraint is automatic and the interior maximum is reached
    with simple backtracking."""
    length = profile.length

    def unpack(theta):
        base, w = theta[0], theta[1:]
        ex = np.exp(w - w.max())
        gaps = length * ex / ex.sum()
        pts = base + np.concatenate(([0.0], np.cumsum(gaps[:-1])))
        return pts, gaps

    def value(theta):
        return hn_value(profile, _wrap_points(unpack(theta)[0], length))

    theta = theta0.copy()
    f = value(theta)
    if not math.isfinite(f):
        raise CollapseError("seed configuration has -inf energy")
    step = 0.1
    for _ in range(max_iter):
        pts, gaps = unpack(theta)
        pts_w = _wrap_points(pts, length)
        g_pts = hn_gradient(profile, pts_w)
        # Chain rule through base and softmax gaps.
        csum = np.concatenate(([0.0], np.cumsum(gaps[:-1])))
        total = g_pts.sum()
        gw = np.empty(n)
        for k in range(n):
            gw[k] = gaps[k] * (g_pts[k + 1 :].sum() - (g_pts * csum).sum() / length)
        grad = np.concatenate(([total], gw))
        gnorm = np.linalg.norm(grad)
        if gnorm < gtol:
            break
        step = min(step * 2.0, 1.0 / max(gnorm, 1e-9))
        improved = False
        while step > 1e-14:
            cand = theta + step * grad
            fc = value(cand)
            if math.isfinite(fc) and fc > f + 1e-4 * step * gnorm ** 2:
                theta, f = cand, fc
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return _wrap_points(unpack(theta)[0], length)


def find_bjf(profile: CurvatureProfile, n: int, seed="uniform",
             gauge_constant: bool = True) -> BouncingField:
    """Locate a bouncing Jacobi field with n minimums.

    Gradient ascent in gap coordinates followed by Newton refinement on the
    gradient; constant-curvature profiles are gauge-fixed to s_1 = 0.
    """
    if existence_precheck(profile, n) is Verdict.CANNOT_EXIST:
        raise NonexistenceError(
            f"no bouncing field with {n} minimums: pi^2 n^2 < L^2 inf K")
    length = profile.length
    if isinstance(seed, str) and seed == "uniform":
        pts0 = length * np.arange(n) / n
    else:
        pts0 = _wrap_points(np.asarray(seed, dtype=float), length)
        if pts0.size != n:
            raise ValueError("seed must supply n points")
    gaps0 = _check_ordered(pts0, length)
    theta0 = np.concatenate(([pts0[0]], np.log(gaps0 / length)))
    pts = _ascent_gap_coordinates(profile, n, theta0)

    gauge = gauge_constant and profile.is_constant
    scale = max(1.0, abs(profile.kappa(0.0)))
    for _ in range(60):
        gaps = np.diff(np.append(pts, pts[0] + length))
        if gaps.min() < MIN_GAP_FRACTION * length:
            raise CollapseError(
                "collapse: no interior maximum found from this seed "
                f"(min gap {gaps.min():.3e})")
        g = hn_gradient(profile, pts)
        if np.abs(g).max() <= GRADIENT_TOL * scale:
            break
        hess, _ = hn_hessian_points(profile, pts)
        if gauge:
            delta = np.zeros(n)
            if n > 1:
                delta[1:] = np.linalg.solve(hess[1:, 1:], -g[1:])
        else:
            try:
                delta = np.linalg.solve(hess, -g)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(hess, -g, rcond=None)[0]
        lam = 1.0
        accepted = False
        gn0 = np.abs(g).max()
        while lam > 2.0 ** -20:
            cand = pts + lam * delta
            cand_gaps = np.diff(np.append(cand, cand[0] + length))
            if cand_gaps.min() > 0 and math.isfinite(hn_value(profile, cand)):
                gn = np.abs(hn_gradient(profile, cand)).max()
                if gn < gn0 * (1.0 - 1e-4 * lam) or gn <= GRADIENT_TOL * scale:
                    pts = _wrap_points(cand, length)
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
    g = hn_gradient(profile, pts)
    if np.abs(g).max() > 1e3 * GRADIENT_TOL * scale:
        raise CollapseError(
            f"Newton refinement stalled with gradient {np.abs(g).max():.3e}")
    return _field_from_points(profile, pts, gauge)


def _gap_distance(gaps_a: np.ndarray, gaps_b: np.ndarray) -> float:
    return min(float(np.abs(gaps_a - np.roll(gaps_b, r)).max())
               for r in range(gaps_b.size))


def find_bjf_sweep(profile: CurvatureProfile, n: int, seeds: int = 32,
                   rng_seed: int = 0) -> list[BouncingField]:
    """Enumerate critical points from random seeds, deduplicated.

    Fields are identified modulo cyclic relabeling (and translation, for
    constant curvature) with point-distance threshold 1e-4; the result is
    deterministically sorted by decreasing H_n."""
    length = profile.length
    rng = np.random.default_rng(rng_seed)
    seed_list = [np.asarray("uniform", dtype=object)]
    configs = ["uniform"]
    for _ in range(seeds - 1):
        configs.append(np.sort(rng.uniform(0.0, length, size=n)))

    def attempt(seed):
        try:
            return find_bjf(profile, n, seed=seed)
        except (CollapseError, DegenerateSegmentError, RuntimeError, ValueError):
            return None

    max_workers = int(os.environ.get("BOUNCING_LAB_THREADS", "0")) or None
    with ThreadPoolExecutor(max_workers=max_workers) as ex:
        results = list(ex.map(attempt, configs))
    found = []
    for fld in results:
        if fld is None:
            continue
        dup = False
        for other in found:
            gaps_f = np.diff(np.append(fld.points, fld.points[0] + length))
            gaps_o = np.diff(np.append(other.points, other.points[0] + length))
            if profile.is_constant:
                if _gap_distance(gaps_f, gaps_o) < 1e-4:
                    dup = True
                    break
            else:
                if fld.n == other.n and np.abs(fld.points - other.points).max() < 1e-4:
                    dup = True
                    break
        if not dup:
            found.append(fld)
    found.sort(key=lambda f: (-f.hn_value, tuple(np.round(f.points, 9))))
    return found


@dataclass
class BounceResult:
    s_next: float
    p_next: float
    jacobian: np.ndarray       # differential in canonical coordinates (s, p^2/2)
    jacobian_sp: np.ndarray    # differential in raw coordinates (s, p)


def bounce_map(profile: CurvatureProfile, s: float, p: float) -> BounceResult:
    """First-return map of the obstacle flow with reflection.

    Integrates phi'' + K phi = 0 from (1, p), p > 0, to the first return to
    height 1, reflects the slope, and returns the differential.  In the
    canonical coordinates (s, p^2/2) the map is exactly area preserving; in
    raw (s, p) coordinates det = p/p'."""
    if p <= 0:
        raise ValueError("bounce_map requires p > 0")
    length = profile.length
    sol = _integrate_fundamental(profile, s, s + length + 1e-9)

    def height(x):
        y = sol.sol(x)
        return y[0] + p * y[2] - 1.0

    _, sup_k = profile.sup_inf()
    npts = max(256, int(16.0 * length * math.sqrt(max(sup_k, 1.0)) / math.pi))
    grid = np.linspace(s, s + length, npts)
    vals = np.array([height(x) for x in grid])
    s2 = None
    for i in range(1, npts):
        if vals[i] < 0.0 <= vals[i - 1] and grid[i - 1] > s:
            s2 = brentq(height, grid[i - 1], grid[i], xtol=1e-14)
            break
    if s2 is None:
        raise OrbitEscapeError("orbit escapes: no return to height 1 within one period")
    u2, du2, v2, dv2 = sol.sol(s2)
    w = du2 + p * dv2              # slope at return, negative
    p2 = -w
    k_s, k_s2 = profile.kappa(s), profile.kappa(s2)
    ys, dys = k_s * v2 - p * u2, k_s * dv2 - p * du2
    j11 = -ys / w
    j12 = -v2 / w
    j21 = k_s2 * j11 - dys
    j22 = k_s2 * j12 - dv2
    j_sp = np.array([[j11, j12], [j21, j22]])
    j_canon = np.diag([1.0, p2]) @ j_sp @ np.diag([1.0, 1.0 / p])
    return BounceResult(float(s2), float(p2), j_canon, j_sp)


def bounce_cycle_newton(profile: CurvatureProfile, points, slopes,
                        tol: float = 1e-12, max_iter: int = 30):
    """Newton solve of the n-cycle equations of the bounce map.

    Unknowns (s_j, p_j); residual matches each bounce to the next point with
    total shift L and equal slopes.  Least-squares step absorbs the
    translation degeneracy of constant profiles."""
    length = profile.length
    x = np.concatenate([np.asarray(points, float), np.asarray(slopes, float)])
    n = len(points)
    for _ in range(max_iter):
        res = np.zeros(2 * n)
        jac = np.zeros((2 * n, 2 * n))
        for j in range(n):
            b = bounce_map(profile, x[j], x[n + j])
            jn = (j + 1) % n
            wrap = length if j == n - 1 else 0.0
            res[2 * j] = b.s_next - (x[jn] + wrap)
            res[2 * j + 1] = b.p_next - x[n + jn]
            jac[2 * j, j] = b.jacobian_sp[0, 0]
            jac[2 * j, n + j] = b.jacobian_sp[0, 1]
            jac[2 * j + 1, j] = b.jacobian_sp[1, 0]
            jac[2 * j + 1, n + j] = b.jacobian_sp[1, 1]
            jac[2 * j, jn] -= 1.0
            jac[2 * j + 1, n + jn] -= 1.0
        if np.abs(res).max() < tol:
            break
        step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        x = x + step
    return x[:n], x[n:], float(np.abs(res).max())


def bjf_index_nullity(profile: CurvatureProfile, field: BouncingField,
                      cross_validate: bool = False,
                      q_nodes: int = 512) -> tuple[int, int]:
    """(index, nullity) of the field from the sigma-coordinate Hessian.

    With cross_validate the index is recomputed from a discretization of the
    broken quadratic form on odd-jump functions and must agree."""
    hess, asym = hn_hessian(profile, field)
    if asym > 1e-6:
        raise RuntimeError(f"Hessian asymmetry diagnostic {asym:.3e} above 1e-6")
    neg, zero, _ = numerics.dense_inertia(hess)
    if cross_validate:
        qneg, qzero = q_form_inertia(profile, field, nodes=q_nodes)
        if qneg != neg:
            raise RuntimeError(
                f"broken-quadratic-form index {qneg} disagrees with Hessian index {neg}")
    return neg, zero


def q_form_inertia(profile: CurvatureProfile, field: BouncingField,
                   nodes: int = 512, zero_band: float = 3e-4) -> tuple[int, int]:
    """Inertia of the discretized broken quadratic form

        Q(eta) = sum_j [ int (eta')^2 - K eta^2 - (K(s_j)/N_j)(eta_+ - eta_-)^2 ]

    over functions with eta(s_j+) = -eta(s_j-) = sigma_j, H^1 on each gap.
    Interior values are rescaled by sqrt(h) (a congruence, inertia-neutral)
    so the matrix is the form with respect to the L^2 inner product and the
    near-zero eigenvalue scales match the jump variables; interior values
    are then eliminated against the n jump amplitudes through the
    block-chain border."""
    n = field.n
    pts = field.points
    length = profile.length
    ends = np.append(pts, pts[0] + length)
    diag_blocks, sub_blocks, border_cols = [], [], []
    border = np.zeros((n, n))
    for j in range(n):
        a, b = ends[j], ends[j + 1]
        h = (b - a) / nodes
        tau = a + h * np.arange(1, nodes)
        kvals = profile.kappa(tau)
        m = nodes - 1
        main = 2.0 / h ** 2 - kvals
        block = np.diag(main) + np.diag(np.full(m - 1, -1.0 / h ** 2), 1) \
            + np.diag(np.full(m - 1, -1.0 / h ** 2), -1)
        diag_blocks.append(block)
        sub_blocks.append(np.zeros((m, m)))  # segments decouple except via sigma
        v = np.zeros((n, m))
        v[j, 0] = -1.0 / h ** 1.5
        v[(j + 1) % n, m - 1] = 1.0 / h ** 1.5
        border_cols.append(v)
        ka, kb = profile.kappa(a), profile.kappa(b)
        border[j, j] += 1.0 / h - 0.5 * h * ka
        jn = (j + 1) % n
        border[jn, jn] += 1.0 / h - 0.5 * h * kb
        border[j, j] += -4.0 * ka / field.jumps[j]
    sub_blocks.pop()
    chain = numerics.SymmetricBlockChain(diag_blocks, sub_blocks, border_cols, border)
    scale = max(4.0 / min((ends[j + 1] - ends[j]) / nodes for j in range(n)) ** 2, 1.0)
    neg, zero, _ = numerics.chain_inertia(chain, 0.0, zero_band, scale)
    return neg, zero
