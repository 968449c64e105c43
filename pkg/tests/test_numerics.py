import math

import numpy as np
import pytest

from bouncing_lab import numerics


def circle_matrix(n, length=2 * np.pi, k0=1.0):
    h = length / n
    bands = np.zeros((2, n))
    bands[0] = 2.0 / h ** 2 - k0
    bands[1] = -1.0 / h ** 2
    return numerics.BandedSymmetricMatrix(n, 1, bands, np.array([[-1.0 / h ** 2]]))


def test_inertia_identity():
    bands = np.zeros((2, 3 + 5))
    bands[0] = 1.0
    m = numerics.BandedSymmetricMatrix(8, 1, bands)
    assert numerics.inertia(m, 0.0) == (0, 0, 8)


def test_inertia_periodic_circle():
    # -d2/ds2 - 1 on the circle: k = 0 negative, k = +-1 in the zero band.
    m = circle_matrix(512)
    assert numerics.inertia(m, 0.0) == (1, 2, 509)
    assert numerics.inertia(m, -2.0) == (0, 0, 512)


def test_inertia_matches_dense_classification():
    # Same matrix, N = 200: dense eigensolve with the same zero band.
    m = circle_matrix(200)
    w = np.linalg.eigvalsh(m.to_dense())
    band = numerics.ZERO_BAND_FACTOR * m.norm_inf()
    ref = (int((w < -band).sum()), int((np.abs(w) <= band).sum()))
    got = numerics.inertia(m, 0.0)
    assert (got[0], got[1]) == ref


def test_inertia_random_banded_vs_dense():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(12, 200))
        p = int(rng.integers(1, min(6, (n - 2) // 2)))
        bands = np.zeros((p + 1, n))
        for r in range(p + 1):
            bands[r, : n - r] = rng.normal(size=n - r)
        corner = rng.normal(size=(p, p)) if rng.random() < 0.5 else None
        m = numerics.BandedSymmetricMatrix(n, p, bands, corner)
        w = np.linalg.eigvalsh(m.to_dense())
        band = numerics.ZERO_BAND_FACTOR * m.norm_inf()
        ref = (int((w < -band).sum()), int((np.abs(w) <= band).sum()),
               int((w > band).sum()))
        assert numerics.inertia(m, 0.0) == ref


def test_inertia_shift_monotonicity():
    rng = np.random.default_rng(3)
    n = 80
    bands = np.zeros((3, n))
    for r in range(3):
        bands[r, : n - r] = rng.normal(size=n - r)
    m = numerics.BandedSymmetricMatrix(n, 2, bands)
    last = -1
    for shift in np.linspace(-4.0, 4.0, 17):
        neg = numerics.inertia(m, float(shift))[0]
        assert neg >= last
        last = neg


def test_matvec_and_dense_agree():
    m = circle_matrix(64)
    rng = np.random.default_rng(1)
    x = rng.normal(size=64)
    assert np.abs(m.matvec(x) - m.to_dense() @ x).max() < 1e-10 * m.norm_inf()


def test_smallest_eigenpairs_diagonal():
    bands = np.zeros((1, 8))
    bands[0] = np.array([-1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    m = numerics.BandedSymmetricMatrix(8, 0, bands)
    rep = numerics.smallest_eigenpairs(m, 1)
    assert abs(rep.eigenvalues[0] + 1.0) < 1e-12
    assert rep.neg_count == 1


def test_smallest_eigenpairs_poeschl_teller():
    # -(d2 + 2 sech^2 x) on [-20, 20]: ground state -1 with sech profile.
    n, half = 2000, 20.0
    h = 2 * half / (n + 1)
    x = -half + h * np.arange(1, n + 1)
    bands = np.zeros((2, n))
    bands[0] = 2.0 / h ** 2 - 2.0 / np.cosh(x) ** 2
    bands[1] = -1.0 / h ** 2
    rep = numerics.smallest_eigenpairs(numerics.BandedSymmetricMatrix(n, 1, bands), 1)
    assert abs(rep.eigenvalues[0] + 1.0) < 1e-3
    ref = 1.0 / np.cosh(x)
    ref /= np.linalg.norm(ref)
    assert abs(abs(rep.eigenvectors[:, 0] @ ref) - 1.0) < 1e-6


def test_smallest_eigenpairs_circle_fourier():
    # -d2 - 1 with K = 1: Fourier eigenvalues k^2 - 1.
    m = circle_matrix(1024)
    rep = numerics.smallest_eigenpairs(m, 3)
    assert abs(rep.eigenvalues[0] + 1.0) < 1e-4
    assert np.abs(rep.eigenvalues[1:]).max() < 1e-4
    assert (rep.neg_count, rep.zero_count) == (1, 2)


def test_lambert_alpha_examples():
    assert abs(numerics.lambert_alpha(1.0 / math.e) - 1.0) < 1e-14
    assert abs(numerics.lambert_alpha(0.01) - 3.385630140290050) < 1e-12
    assert abs(numerics.lambert_alpha(0.1) - 1.745528002740699) < 1e-12
    with pytest.raises(ValueError):
        numerics.lambert_alpha(1.0)


def test_lambert_residual_grid():
    for eps in np.geomspace(1e-6, 0.5, 25):
        a = numerics.lambert_alpha(float(eps))
        assert abs(a * math.exp(a) - 1.0 / eps) <= 1e-12 / eps


def test_quadrature_basics():
    assert abs(numerics.adaptive_quadrature(lambda x: 1.0, 0.0, 1.0, 1e-12) - 1.0) < 1e-12
    c0 = numerics.adaptive_quadrature(
        lambda x: 0.5 / np.cosh(x / math.sqrt(2)) ** 4, -math.inf, math.inf, 1e-12)
    assert abs(c0 - 2.0 * math.sqrt(2.0) / 3.0) < 1e-12
    c1 = numerics.adaptive_quadrature(
        lambda x: 6.0 * math.exp(-math.sqrt(2) * x)
        * (1 - math.tanh(x / math.sqrt(2)) ** 2)
        / math.sqrt(2) / math.cosh(x / math.sqrt(2)) ** 2,
        -math.inf, math.inf, 1e-12)
    assert abs(c1 - 16.0) < 1e-10


def test_quadrature_tolerance_warning():
    with pytest.warns(numerics.QuadratureToleranceWarning):
        # |x|^(-1/2)-type endpoint blowup cannot reach 1e-14 on a tight budget
        numerics.quadrature_with_error(
            lambda x: abs(math.sin(50.0 / (abs(x) + 1e-12))), 0.0, 1.0, 1e-14)


def test_quadrature_error_estimate_controls_refinement():
    # Doubling the requested tolerance changes the value by less than the
    # reported estimate.
    f = lambda x: math.exp(-math.sqrt(2) * abs(x)) * math.cos(3 * x)
    v1, e1 = numerics.quadrature_with_error(f, -math.inf, math.inf, 1e-8)
    v2, _ = numerics.quadrature_with_error(f, -math.inf, math.inf, 1e-12)
    assert abs(v1 - v2) <= max(e1, 1e-12)
