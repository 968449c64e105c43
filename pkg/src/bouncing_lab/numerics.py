"""Shared numerical kernels.

Banded symmetric matrices with periodic wrap-around corners, exact Sylvester
inertia through a block-chain (Haynsworth) elimination, smallest eigenpairs by
shift-invert Lanczos, the Lambert-type scale equation a*exp(a) = 1/eps, and
adaptive quadrature for exponentially decaying integrands.

Everything here is a pure function of its inputs; matrices are immutable
after assembly and safe to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.special import lambertw

# Relative half-width of the "counts as zero" eigenvalue band, and the pivot
# breakdown threshold of the symmetric factorization.  Acceptance-scale
# problems are arranged so genuine nonzero eigenvalues clear the band by two
# orders of magnitude; callers working on eps^2-scaled operators must pass
# their own zero_band.
ZERO_BAND_FACTOR = 1e-6
PIVOT_BREAKDOWN_FACTOR = 1e-12


class IndeterminateInertiaError(RuntimeError):
    """A Schur pivot landed on the zero-tolerance boundary; perturb the shift."""


class EigensolverError(RuntimeError):
    """Lanczos iteration failed or disagreed with the inertia cross-check."""


@dataclass(frozen=True)
class BandedSymmetricMatrix:
    """Symmetric banded matrix, lower bands stored, optional periodic corners.

    bands[r, i] = A[i + r, i] for r = 0..p (entries past the end unused).
    corner[r, c] = A[n - p + r, c] for r, c = 0..p-1 is the wrap-around block
    of a periodic stencil (the top-right block is its transpose).
    """

    size: int
    half_bandwidth: int
    bands: np.ndarray
    corner: np.ndarray | None = None

    def __post_init__(self):
        p = self.half_bandwidth
        if self.bands.shape != (p + 1, self.size):
            raise ValueError("bands must have shape (half_bandwidth+1, size)")
        if self.corner is not None and self.corner.shape != (p, p):
            raise ValueError("corner must have shape (p, p)")
        if p > 0 and self.size < 2 * p + 2:
            raise ValueError("size too small for the stored bandwidth")

    def to_dense(self) -> np.ndarray:
        n, p = self.size, self.half_bandwidth
        a = np.zeros((n, n))
        for r in range(p + 1):
            idx = np.arange(n - r)
            a[idx + r, idx] = self.bands[r, : n - r]
            a[idx, idx + r] = self.bands[r, : n - r]
        if self.corner is not None:
            a[n - p :, :p] += self.corner
            a[:p, n - p :] += self.corner.T
        return a

    def to_sparse(self) -> scipy.sparse.csc_matrix:
        n, p = self.size, self.half_bandwidth
        a = scipy.sparse.diags(self.bands[0], 0, shape=(n, n), format="lil")
        for r in range(1, p + 1):
            d = self.bands[r, : n - r]
            a += scipy.sparse.diags(d, -r, shape=(n, n), format="lil")
            a += scipy.sparse.diags(d, r, shape=(n, n), format="lil")
        if self.corner is not None:
            a[n - p :, :p] += self.corner
            a[:p, n - p :] += self.corner.T
        return scipy.sparse.csc_matrix(a)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n, p = self.size, self.half_bandwidth
        y = self.bands[0] * x
        for r in range(1, p + 1):
            y[r:] += self.bands[r, : n - r] * x[: n - r]
            y[: n - r] += self.bands[r, : n - r] * x[r:]
        if self.corner is not None:
            y[n - p :] += self.corner @ x[:p]
            y[:p] += self.corner.T @ x[n - p :]
        return y

    def norm_inf(self) -> float:
        n, p = self.size, self.half_bandwidth
        rowsum = np.abs(self.bands[0]).copy()
        for r in range(1, p + 1):
            d = np.abs(self.bands[r, : n - r])
            rowsum[r:] += d
            rowsum[: n - r] += d
        if self.corner is not None:
            c = np.abs(self.corner)
            rowsum[n - p :] += c.sum(axis=1)
            rowsum[:p] += c.sum(axis=0)
        return float(rowsum.max())

    def shifted(self, sigma: float) -> "BandedSymmetricMatrix":
        bands = self.bands.copy()
        bands[0] = bands[0] - sigma
        return BandedSymmetricMatrix(self.size, self.half_bandwidth, bands, self.corner)

    def to_chain(self) -> "SymmetricBlockChain":
        """Partition into a block-tridiagonal chain with the wrap folded into
        a trailing dense border (the bordered factorization used by inertia)."""
        n, p = self.size, self.half_bandwidth
        if p == 0:
            blocks = [np.array([[v]]) for v in self.bands[0]]
            return SymmetricBlockChain(blocks, [np.zeros((1, 1))] * (n - 1), None, None)
        q, r = divmod(n, p)
        border_size = p + r
        ncore = n - border_size
        nblocks = ncore // p
        diag_blocks, sub_blocks, border_cols = [], [], []
        for b in range(nblocks):
            i0 = b * p
            blk = np.zeros((p, p))
            for r_ in range(p + 1):
                for c_ in range(p - r_):
                    blk[c_ + r_, c_] = self.bands[r_, i0 + c_]
            blk = np.tril(blk) + np.tril(blk, -1).T
            diag_blocks.append(blk)
            if b < nblocks - 1:
                sub = np.zeros((p, p))
                for r_ in range(1, p + 1):
                    for c_ in range(p - r_, p):
                        sub[c_ + r_ - p, c_] = self.bands[r_, i0 + c_]
                sub_blocks.append(sub)
            v = np.zeros((border_size, p))
            if b == nblocks - 1:
                for r_ in range(1, p + 1):
                    for c_ in range(p):
                        i = i0 + c_ + r_
                        if i >= ncore:
                            v[i - ncore, c_] = self.bands[r_, i0 + c_]
            if b == 0 and self.corner is not None:
                v[border_size - p :, :] += self.corner
            border_cols.append(v)
        border = np.zeros((border_size, border_size))
        for r_ in range(p + 1):
            for c_ in range(border_size - r_):
                border[c_ + r_, c_] = self.bands[r_, ncore + c_]
        border = np.tril(border) + np.tril(border, -1).T
        return SymmetricBlockChain(diag_blocks, sub_blocks, border_cols, border)


@dataclass
class SymmetricBlockChain:
    """Symmetric block-tridiagonal chain plus an optional dense border.

    diag[i] are symmetric blocks, sub[i] = A[block i+1, block i], and
    border_cols[i] = A[border, block i]; border is the trailing dense block.
    """

    diag: list
    sub: list
    border_cols: list | None
    border: np.ndarray | None

    @property
    def size(self) -> int:
        n = sum(d.shape[0] for d in self.diag)
        if self.border is not None:
            n += self.border.shape[0]
        return n

    def shifted(self, sigma: float) -> "SymmetricBlockChain":
        diag = [d - sigma * np.eye(d.shape[0]) for d in self.diag]
        border = self.border
        if border is not None:
            border = border - sigma * np.eye(border.shape[0])
        return SymmetricBlockChain(diag, self.sub, self.border_cols, border)

    def negative_count(self, pivot_tol: float) -> int:
        """Negative-eigenvalue count by Haynsworth inertia additivity.

        Each Schur complement block is diagonalized; an eigenvalue within
        pivot_tol of zero is a factorization breakdown.
        """
        if all(d.shape[0] == 1 for d in self.diag):
            return self._negative_count_scalar(pivot_tol)
        neg = 0
        m = len(self.diag)
        has_border = self.border is not None
        t = self.border.copy() if has_border else None
        s = self.diag[0].astype(float, copy=True)
        v = self.border_cols[0].astype(float, copy=True) if has_border else None
        for i in range(m):
            w, q = np.linalg.eigh(s)
            if np.any(np.abs(w) <= pivot_tol):
                raise IndeterminateInertiaError(
                    "indeterminate inertia; perturb shift (pivot within "
                    f"{pivot_tol:.3e} of zero)")
            neg += int(np.count_nonzero(w < 0.0))
            if has_border:
                s_inv_vt = q @ ((q.T @ v.T) / w[:, None])
                t -= v @ s_inv_vt
            if i == m - 1:
                break
            c = self.sub[i]
            s_inv_ct = q @ ((q.T @ c.T) / w[:, None])
            s_next = self.diag[i + 1] - c @ s_inv_ct
            if has_border:
                v = self.border_cols[i + 1] - (c @ s_inv_vt).T
            s = s_next
        if has_border:
            w = np.linalg.eigvalsh(0.5 * (t + t.T))
            if np.any(np.abs(w) <= pivot_tol):
                raise IndeterminateInertiaError(
                    "indeterminate inertia; perturb shift (border pivot within "
                    f"{pivot_tol:.3e} of zero)")
            neg += int(np.count_nonzero(w < 0.0))
        return neg

    def _negative_count_scalar(self, pivot_tol: float) -> int:
        m = len(self.diag)
        d = np.array([blk[0, 0] for blk in self.diag], dtype=float)
        c = np.array([blk[0, 0] for blk in self.sub], dtype=float) if m > 1 else np.zeros(0)
        has_border = self.border is not None
        if has_border:
            t = self.border.astype(float, copy=True)
            vs = np.column_stack([v[:, 0] for v in self.border_cols])
        neg = 0
        s = d[0]
        v = vs[:, 0].copy() if has_border else None
        for i in range(m):
            if abs(s) <= pivot_tol:
                raise IndeterminateInertiaError(
                    "indeterminate inertia; perturb shift (pivot within "
                    f"{pivot_tol:.3e} of zero)")
            if s < 0.0:
                neg += 1
            if has_border:
                t -= np.outer(v, v) / s
            if i == m - 1:
                break
            if has_border:
                v = vs[:, i + 1] - (c[i] / s) * v
            s = d[i + 1] - c[i] * c[i] / s
        if has_border:
            w = np.linalg.eigvalsh(0.5 * (t + t.T))
            if np.any(np.abs(w) <= pivot_tol):
                raise IndeterminateInertiaError(
                    "indeterminate inertia; perturb shift (border pivot within "
                    f"{pivot_tol:.3e} of zero)")
            neg += int(np.count_nonzero(w < 0.0))
        return neg


def chain_inertia(chain: SymmetricBlockChain, shift: float, zero_band: float,
                  scale: float) -> tuple[int, int, int]:
    """(neg, zero, pos) of the chain at the given shift.

    Eigenvalues within zero_band of the shift count as zero; realized by two
    exact factorizations at shift -/+ zero_band, so pivots never sit on top
    of a near-degenerate cluster."""
    pivot_tol = PIVOT_BREAKDOWN_FACTOR * max(scale, 1e-300)
    size = chain.size
    lo = chain.shifted(shift - zero_band).negative_count(pivot_tol)
    hi = chain.shifted(shift + zero_band).negative_count(pivot_tol)
    return lo, hi - lo, size - hi


def inertia(matrix: BandedSymmetricMatrix, shift: float,
            zero_band: float | None = None) -> tuple[int, int, int]:
    """Sylvester inertia (neg, zero, pos) of A - shift*I.

    An eigenvalue within zero_band of the shift counts as zero; the default
    band is ZERO_BAND_FACTOR * ||A||_inf."""
    if not math.isfinite(shift):
        raise ValueError("shift must be finite")
    scale = max(matrix.norm_inf(), abs(shift))
    if zero_band is None:
        zero_band = ZERO_BAND_FACTOR * matrix.norm_inf()
    return chain_inertia(matrix.to_chain(), shift, zero_band, scale)


def dense_inertia(a: np.ndarray, zero_band: float | None = None) -> tuple[int, int, int]:
    """Inertia of a small dense symmetric matrix, same zero-band convention."""
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    if zero_band is None:
        scale = float(np.abs(a).sum(axis=1).max()) if a.size else 0.0
        zero_band = ZERO_BAND_FACTOR * scale + 1e-12
    neg = int(np.count_nonzero(w < -zero_band))
    zero = int(np.count_nonzero(np.abs(w) <= zero_band))
    return neg, zero, len(w) - neg - zero


@dataclass
class SpectrumReport:
    """Counts and extreme eigenpairs of a symmetric operator.

    neg_count/zero_count come from exact inertia; eigenpairs from the
    iterative solver, each with residual |A v - lambda v| <= 1e-8 * scale.
    gap is min |lambda| over the computed window divided by gap_scale.
    """

    neg_count: int
    zero_count: int
    pos_count: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    gap: float
    gap_scale: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.neg_count + self.zero_count + self.pos_count

    @property
    def smallest_eigenvalues(self):
        return [(float(v), self.eigenvectors[:, i]) for i, v in enumerate(self.eigenvalues)]

    def to_jsonable(self) -> dict:
        out = {
            "neg_count": self.neg_count,
            "zero_count": self.zero_count,
            "pos_count": self.pos_count,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "max_residual": float(self.residuals.max()) if self.residuals.size else 0.0,
            "gap": self.gap,
            "gap_scale": self.gap_scale,
        }
        out.update(self.notes)
        return out


def _gershgorin_bounds(matrix: BandedSymmetricMatrix) -> tuple[float, float]:
    n, p = matrix.size, matrix.half_bandwidth
    off = np.zeros(n)
    for r in range(1, p + 1):
        d = np.abs(matrix.bands[r, : n - r])
        off[r:] += d
        off[: n - r] += d
    if matrix.corner is not None:
        c = np.abs(matrix.corner)
        off[n - p :] += c.sum(axis=1)
        off[:p] += c.sum(axis=0)
    return float((matrix.bands[0] - off).min()), float((matrix.bands[0] + off).max())


def smallest_eigenpairs(matrix: BandedSymmetricMatrix, k: int,
                        zero_band: float | None = None,
                        gap_scale: float = 1.0) -> SpectrumReport:
    """The k algebraically smallest eigenpairs, cross-checked against inertia.

    Shift-invert Lanczos (ARPACK) anchored below the Gershgorin floor with a
    deterministic starting vector.  The count of returned eigenvalues below
    zero must agree with inertia(matrix, 0) whenever k covers them all.
    """
    n = matrix.size
    if not (1 <= k <= n // 4):
        raise ValueError("need 1 <= k <= size/4")
    lo, hi = _gershgorin_bounds(matrix)
    sigma = lo - 0.01 * max(hi - lo, 1.0)
    a = matrix.to_sparse()
    v0 = np.full(n, 1.0 / math.sqrt(n))
    try:
        vals, vecs = scipy.sparse.linalg.eigsh(a, k=k, sigma=sigma, which="LM", v0=v0)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise EigensolverError(f"Lanczos stagnation: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    scale = max(abs(lo), abs(hi))
    residuals = np.array([
        np.linalg.norm(matrix.matvec(vecs[:, i]) - vals[i] * vecs[:, i])
        for i in range(k)
    ])
    if np.any(residuals > 1e-8 * scale):
        raise EigensolverError(
            f"Ritz residuals too large: max {residuals.max():.3e} vs scale {scale:.3e}")
    if zero_band is None:
        zero_band = ZERO_BAND_FACTOR * matrix.norm_inf()
    neg, zero, pos = inertia(matrix, 0.0, zero_band=zero_band)
    got_below = int(np.count_nonzero(vals < -zero_band))
    expected_below = min(k, neg)
    if got_below != expected_below:
        raise EigensolverError(
            f"eigensolver/inertia disagreement: {got_below} Ritz values below "
            f"zero vs inertia count {neg} (k={k})")
    gap = float(np.abs(vals).min()) / gap_scale if k else math.inf
    return SpectrumReport(neg, zero, pos, vals, vecs, residuals, gap, gap_scale)


def lambert_alpha(epsilon: float) -> float:
    """The unique a > 0 with a * exp(a) = 1/epsilon, to 1e-14 relative.

    Defined for 0 < epsilon < 1 (the vanishing-epsilon regime)."""
    if not (0.0 < epsilon < 1.0):
        raise ValueError("lambert_alpha requires 0 < epsilon < 1")
    target = 1.0 / epsilon
    a = float(lambertw(target).real)
    # Safeguarded Newton polish on f(a) = a + log(a) - log(1/eps).
    for _ in range(8):
        f = a + math.log(a) - math.log(target)
        step = f / (1.0 + 1.0 / a)
        a_new = a - step
        if a_new <= 0.0:
            a_new = 0.5 * a
        a = a_new
        if abs(step) <= 1e-16 * a:
            break
    return a


class QuadratureToleranceWarning(UserWarning):
    """Requested tolerance unreachable; the message carries the estimate."""


def quadrature_with_error(f, a: float, b: float, tol: float = 1e-10,
                          decay_rate: float = math.sqrt(2.0)) -> tuple[float, float]:
    """Adaptive quadrature returning (value, error estimate).

    Infinite endpoints are truncated where the exp(-decay_rate*|x|) envelope
    falls below tol/100 (cutoff R = log(100/tol)/decay_rate), which suits the
    exponentially decaying integrands used throughout.
    """
    if a >= b:
        raise ValueError("need a < b")
    cutoff = math.log(100.0 / tol) / decay_rate
    a_eff = a if math.isfinite(a) else -cutoff
    b_eff = b if math.isfinite(b) else cutoff
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        val, err = scipy.integrate.quad(f, a_eff, b_eff, epsabs=tol / 4,
                                        epsrel=tol / 4, limit=400)
    if err > tol:
        warnings.warn(
            f"requested tol {tol:.3e} unreachable; achieved error estimate {err:.3e}",
            QuadratureToleranceWarning)
    return float(val), float(err)


def adaptive_quadrature(f, a: float, b: float, tol: float = 1e-10,
                        decay_rate: float = math.sqrt(2.0)) -> float:
    """Integral of f over [a, b] within tol; see quadrature_with_error."""
    val, _ = quadrature_with_error(f, a, b, tol, decay_rate)
    return val
