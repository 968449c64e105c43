import math

import numpy as np
import pytest

from bouncing_lab import geometry, jacobi


def test_ivp_flat():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 0.0)
    v, p = jacobi.jacobi_ivp(prof, 0.0, 1.0, 1.0, 2.0)
    assert abs(v - 3.0) < 1e-10 and abs(p - 1.0) < 1e-10


def test_ivp_cosine():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    v, p = jacobi.jacobi_ivp(prof, 0.0, 1.0, 0.0, np.pi / 2)
    assert abs(v) < 1e-10 and abs(p + 1.0) < 1e-10


def test_ivp_mixed_rk_oracle():
    # phi = cos s + sqrt(3) sin s; cross-checked against a plain RK4 march.
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    v, p = jacobi.jacobi_ivp(prof, 0.0, 1.0, math.sqrt(3.0), 2 * np.pi / 3)
    assert abs(v - 1.0) < 1e-10 and abs(p + math.sqrt(3.0)) < 1e-10

    def rk4(f, y0, a, b, steps):
        y = np.array(y0, dtype=float)
        h = (b - a) / steps
        x = a
        for _ in range(steps):
            k1 = f(x, y)
            k2 = f(x + h / 2, y + h / 2 * k1)
            k3 = f(x + h / 2, y + h / 2 * k2)
            k4 = f(x + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            x += h
        return y

    f = lambda x, y: np.array([y[1], -y[0]])
    ref = rk4(f, [1.0, math.sqrt(3.0)], 0.0, 2 * np.pi / 3, 4000)
    assert abs(v - ref[0]) < 1e-9 and abs(p - ref[1]) < 1e-9


def test_wronskian_conservation():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.2], [0.1])
    sol = jacobi._integrate_fundamental(prof, 0.3, 2.8)
    g = np.linspace(0.3, 2.8, 100)
    y = sol.sol(g)
    wr = y[0] * y[3] - y[2] * y[1]
    assert np.abs(wr - 1.0).max() < 1e-9


def test_segment_energy_flat():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 0.0)
    h, seg = jacobi.segment_energy(prof, 0.0, 1.0)
    assert abs(h) < 1e-12
    assert np.abs(seg.values - 1.0).max() < 1e-12


def test_segment_energy_closed_form():
    # H = -2 sqrt(K) tan(sqrt(K) L / 2) for constant curvature.
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    h, seg = jacobi.segment_energy(prof, 0.0, np.pi / 2)
    assert abs(h + 2.0) < 1e-10
    assert seg.slope_left > 0 > seg.slope_right
    # interior maximum principle: phi > 1 strictly inside
    assert seg.values[1:-1].min() > 1.0


def test_segment_energy_fd_bvp_oracle():
    # Independent dense finite-difference two-point solve of the same BVP.
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.2], [0.0])
    a, b = 0.3, 2.1
    h, seg = jacobi.segment_energy(prof, a, b)
    n = 4000
    hh = (b - a) / n
    x = a + hh * np.arange(1, n)
    main = -2.0 / hh ** 2 + prof.kappa(x)
    rhs = np.zeros(n - 1)
    rhs[0] -= 1.0 / hh ** 2
    rhs[-1] -= 1.0 / hh ** 2
    import scipy.sparse
    import scipy.sparse.linalg
    lap = scipy.sparse.diags(
        [np.full(n - 2, 1.0 / hh ** 2), main, np.full(n - 2, 1.0 / hh ** 2)],
        offsets=(-1, 0, 1), format="csc")
    phi = scipy.sparse.linalg.spsolve(lap, rhs)
    full = np.concatenate(([1.0], phi, [1.0]))
    slope_l = (-3 * full[0] + 4 * full[1] - full[2]) / (2 * hh)
    slope_r = (3 * full[-1] - 4 * full[-2] + full[-3]) / (2 * hh)
    assert abs(h - (slope_r - slope_l)) < 1e-5
    assert np.abs(seg(x) - full[1:-1]).max() < 1e-6


def test_conjugate_point_detection():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    h, seg = jacobi.segment_energy(prof, 0.0, 3 * np.pi / 2)
    assert h == -math.inf and seg is None
    with pytest.raises(jacobi.DegenerateSegmentError):
        jacobi.segment_energy(prof, 0.0, np.pi)


def test_bvp_shooting_consistency():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.15], [0.1])
    h, seg = jacobi.segment_energy(prof, 0.5, 2.6)
    assert abs(seg.values[0] - 1.0) + abs(seg.values[-1] - 1.0) < 1e-10
    # residual phi'' + K phi via high-order differences on the dense output
    x = np.linspace(0.5 + 0.02, 2.6 - 0.02, 400)
    d = 0.005
    second = (-seg(x - 2 * d) + 16 * seg(x - d) - 30 * seg(x)
              + 16 * seg(x + d) - seg(x + 2 * d)) / (12 * d * d)
    res = second + prof.kappa(x) * seg(x)
    assert np.abs(res).max() < 1e-8


def test_segment_energy_nonpositive_when_k_positive():
    rng = np.random.default_rng(7)
    for _ in range(20):
        prof = geometry.CurvatureProfile(2 * np.pi, 1.0,
                                         0.3 * rng.uniform(-1, 1, 2),
                                         0.3 * rng.uniform(-1, 1, 2))
        inf_k, sup_k = prof.sup_inf()
        if inf_k <= 0:
            continue
        a = float(rng.uniform(0, 2 * np.pi))
        b = a + float(rng.uniform(0.2, 0.9)) * np.pi / math.sqrt(sup_k)
        h, _ = jacobi.segment_energy(prof, a, b)
        assert h <= 1e-12


def test_geodesic_index_examples():
    cases = [(-1.0, 0, 0), (1.0, 1, 2), (4.0, 3, 2)]
    for k0, idx, nul in cases:
        prof = geometry.CurvatureProfile.constant(2 * np.pi, k0)
        rep = jacobi.geodesic_index(prof, nbase=256)
        assert (rep.neg_count, rep.zero_count) == (idx, nul)


def test_geodesic_index_fourier_oracle():
    # K = 4: eigenvalues k^2 - 4; smallest three are -4, -3, -3.
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 4.0)
    rep = jacobi.geodesic_index(prof, nbase=256)
    assert np.abs(np.sort(rep.eigenvalues[:3]) - np.array([-4.0, -3.0, -3.0])).max() < 1e-3
