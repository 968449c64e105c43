import math

import numpy as np
import pytest

from bouncing_lab import bouncing, geometry, jacobi

LENGTH = 2 * np.pi


def fd_gradient(profile, pts, h=1e-5):
    g = np.zeros(len(pts))
    for j in range(len(pts)):
        e = np.zeros(len(pts))
        e[j] = h
        g[j] = (bouncing.hn_value(profile, pts + e)
                - bouncing.hn_value(profile, pts - e)) / (2 * h)
    return g


def fd_hessian_points(profile, pts, d=2.5e-3):
    n = len(pts)
    out = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            ej = np.zeros(n); ej[j] = d
            ek = np.zeros(n); ek[k] = d
            out[j, k] = (bouncing.hn_value(profile, pts + ej + ek)
                         - bouncing.hn_value(profile, pts + ej - ek)
                         - bouncing.hn_value(profile, pts - ej + ek)
                         + bouncing.hn_value(profile, pts - ej - ek)) / (4 * d * d)
    return out


def test_hn_value_examples(profile_k1):
    flat = geometry.CurvatureProfile.constant(LENGTH, 0.0)
    assert bouncing.hn_value(flat, [0.0, 2.0]) == 0.0
    val = bouncing.hn_value(profile_k1, [0.0, LENGTH / 3, 2 * LENGTH / 3])
    assert abs(val + 6.0 * math.sqrt(3.0)) < 1e-9
    assert bouncing.hn_value(profile_k1, [0.0]) == -math.inf
    with pytest.raises(ValueError):
        bouncing.hn_value(profile_k1, [2.0, 1.0, 3.0])


def test_hn_gradient_symmetry_and_fd(profile_k1):
    g = bouncing.hn_gradient(profile_k1, [0.0, LENGTH / 3, 2 * LENGTH / 3])
    assert np.abs(g).max() < 1e-10
    pts = np.array([0.0, 2.0, 4.0])
    g = bouncing.hn_gradient(profile_k1, pts)
    gfd = fd_gradient(profile_k1, pts)
    assert np.abs(g - gfd).max() / np.abs(gfd).max() < 1e-6


def test_hn_gradient_threefold_symmetry():
    prof = geometry.CurvatureProfile(LENGTH, 1.0, [0, 0, 0.2], [0, 0, 0])
    pts = np.array([np.pi / 3, np.pi, 5 * np.pi / 3])
    g = bouncing.hn_gradient(prof, pts)
    assert np.abs(g - g[0]).max() < 1e-9
    gfd = fd_gradient(prof, pts)
    assert np.abs(g - gfd).max() < 1e-6 * max(1.0, np.abs(gfd).max())


def test_hn_hessian_n1_matches_fd():
    prof = geometry.CurvatureProfile.constant(2.0, 0.5)
    pts = np.array([0.7])
    hess, _ = bouncing.hn_hessian_points(prof, pts)
    hfd = fd_hessian_points(prof, pts)
    # H_1 is constant for constant curvature: both vanish.
    assert abs(hess[0, 0]) < 1e-8
    assert abs(hess[0, 0] - hfd[0, 0]) < 1e-5


def test_hn_hessian_fd_entrywise(profile_pert):
    pts = np.array([0.3, 2.2, 4.4])
    hess, asym = bouncing.hn_hessian_points(profile_pert, pts)
    assert asym < 1e-9
    hfd = fd_hessian_points(profile_pert, pts)
    assert np.abs(hess - hfd).max() / np.abs(hfd).max() < 1e-4


def test_hn_hessian_circulant_structure(profile_k1, field_k1_n3):
    hess, _ = bouncing.hn_hessian(profile_k1, field_k1_n3)
    # 3-fold symmetry: circulant with zero row sums (rotation zero mode).
    assert abs(hess[0, 0] - hess[1, 1]) < 1e-9
    assert abs(hess[0, 1] - hess[1, 2]) < 1e-9
    w = np.linalg.eigvalsh(hess)
    assert abs(w[-1]) < 1e-9          # zero mode
    assert (w < -1e-6).sum() == 2
    zero_vec = np.ones(3) / math.sqrt(3)
    assert np.abs(hess @ zero_vec).max() < 1e-9


def test_sigma_coordinate_inertia_consistency(profile_pert, field_pert_n3):
    from bouncing_lab import numerics
    h_s, _ = bouncing.hn_hessian_points(profile_pert, field_pert_n3.points)
    h_sig, _ = bouncing.hn_hessian(profile_pert, field_pert_n3)
    assert numerics.dense_inertia(h_s) == numerics.dense_inertia(h_sig)


def test_find_bjf_constant_curvature(profile_k1, field_k1_n3):
    fld = field_k1_n3
    assert np.abs(fld.points - LENGTH * np.arange(3) / 3).max() < 1e-9
    assert np.abs(fld.jumps - 2.0 * math.sqrt(3.0)).max() < 1e-9
    s = np.linspace(0, LENGTH, 2000, endpoint=False)
    ref = np.cos(np.mod(s, LENGTH / 3) - np.pi / 3) / math.cos(np.pi / 3)
    assert np.abs(fld.phi(s) - ref).max() < 1e-9
    assert fld.phi(np.pi / 3) == pytest.approx(2.0, abs=1e-9)
    assert (fld.index, fld.nullity) == (2, 1)


def test_find_bjf_small_circle():
    prof = geometry.CurvatureProfile.constant(2.0, 0.5)
    fld = bouncing.find_bjf(prof, 1)
    assert fld.points[0] == 0.0      # gauge fixed
    assert np.abs(bouncing.hn_gradient(prof, fld.points)).max() < 1e-10
    assert (fld.index, fld.nullity) == (0, 1)
    # 1-parameter scan oracle: H_1 constant in the base point
    vals = [bouncing.hn_value(prof, [x]) for x in np.linspace(0, 2, 17)]
    assert np.ptp(vals) < 1e-9


def test_find_bjf_perturbed(profile_pert, field_pert_n3):
    fld = field_pert_n3
    assert np.abs(bouncing.hn_gradient(profile_pert, fld.points)).max() < 1e-10
    assert (fld.index, fld.nullity) == (3, 0)
    uniform = LENGTH * np.arange(3) / 3
    dist = min(np.abs(np.sort(np.mod(fld.points - r, LENGTH)) - uniform).max()
               for r in np.linspace(0, LENGTH, 720, endpoint=False))
    assert dist < 0.2
    # reflection at the optimum
    assert np.abs(fld.slopes_right() + fld.slopes_left()).max() < 1e-8
    assert np.all(fld.jumps > 0)


def test_find_bjf_nonexistence(profile_k1):
    with pytest.raises(bouncing.NonexistenceError):
        bouncing.find_bjf(profile_k1, 1)


def test_bounce_map_closed_forms(profile_k1):
    b = bouncing.bounce_map(profile_k1, 0.0, 1.0)
    assert abs(b.s_next - np.pi / 2) < 1e-9
    assert abs(b.p_next - 1.0) < 1e-9
    b2 = bouncing.bounce_map(profile_k1, 0.0, math.sqrt(3.0))
    assert abs(b2.s_next - 2 * np.pi / 3) < 1e-9
    assert abs(b2.p_next - math.sqrt(3.0)) < 1e-9


def test_bounce_map_canonical_area_preservation(profile_pert):
    rng = np.random.default_rng(5)
    for _ in range(8):
        s = float(rng.uniform(0, LENGTH))
        p = float(rng.uniform(0.4, 3.0))
        b = bouncing.bounce_map(profile_pert, s, p)
        assert abs(abs(np.linalg.det(b.jacobian)) - 1.0) < 1e-6
        # raw-coordinate determinant carries the slope ratio p/p'
        assert abs(np.linalg.det(b.jacobian_sp) - p / b.p_next) < 1e-6


def test_bounce_map_jacobian_fd_oracle(profile_pert):
    s0, p0 = 0.7, 1.3
    b = bouncing.bounce_map(profile_pert, s0, p0)
    h = 1e-6
    e0 = p0 ** 2 / 2

    def canon(s, e):
        bb = bouncing.bounce_map(profile_pert, s, math.sqrt(2 * e))
        return np.array([bb.s_next, bb.p_next ** 2 / 2])

    col_s = (canon(s0 + h, e0) - canon(s0 - h, e0)) / (2 * h)
    col_e = (canon(s0, e0 + h) - canon(s0, e0 - h)) / (2 * h)
    jfd = np.column_stack([col_s, col_e])
    assert np.abs(jfd - b.jacobian).max() < 1e-5


def test_bounce_map_escape():
    prof = geometry.CurvatureProfile.constant(LENGTH, -0.5)
    with pytest.raises(bouncing.OrbitEscapeError):
        bouncing.bounce_map(prof, 0.0, 1.0)


def test_field_is_bounce_cycle(profile_pert, field_pert_n3):
    fld = field_pert_n3
    ps = fld.slopes_right()
    for j in range(fld.n):
        b = bouncing.bounce_map(profile_pert, fld.points[j], ps[j])
        target = fld.points[(j + 1) % fld.n] + (LENGTH if j == fld.n - 1 else 0.0)
        assert abs(b.s_next - target) < 1e-6
        assert abs(b.p_next - ps[j]) < 1e-6


def test_cycle_newton_reproduces_optimizer(profile_pert, field_pert_n3):
    fld = field_pert_n3
    pts0 = fld.points + np.array([2e-3, -1e-3, 1.5e-3])
    ps0 = fld.slopes_right() * (1 + np.array([1e-3, -5e-4, 2e-4]))
    pts, ps, res = bouncing.bounce_cycle_newton(profile_pert, pts0, ps0)
    assert res < 1e-10
    assert np.abs(pts - fld.points).max() < 1e-6
    assert np.abs(ps - fld.slopes_right()).max() < 1e-6


def test_bjf_index_nullity_examples(profile_k1, field_k1_n3,
                                    profile_pert, field_pert_n3):
    assert bouncing.bjf_index_nullity(profile_k1, field_k1_n3,
                                      cross_validate=True) == (2, 1)
    assert bouncing.bjf_index_nullity(profile_pert, field_pert_n3,
                                      cross_validate=True) == (3, 0)
    prof = geometry.CurvatureProfile.constant(2.0, 0.5)
    fld = bouncing.find_bjf(prof, 1)
    assert bouncing.bjf_index_nullity(prof, fld) == (0, 1)
    assert field_pert_n3.index + field_pert_n3.nullity <= 3


def test_q_form_inertia_grid_stability(profile_pert, field_pert_n3):
    for nodes in (256, 512):
        assert bouncing.q_form_inertia(profile_pert, field_pert_n3,
                                       nodes=nodes)[0] == 3


def test_necessary_condition_2n(profile_pert, field_pert_n3):
    rep = jacobi.geodesic_index(profile_pert, nbase=256)
    assert 2 * field_pert_n3.n >= rep.neg_count


def test_two_critical_points_single_minimum():
    # Non-constant curvature, n = 1 on a short circle: the periodic energy
    # has at least a maximum and a minimum; both refine to distinct fields.
    prof = geometry.CurvatureProfile(2.0, 0.5, [0.2], [0.0])
    sgrid = np.linspace(0, 2.0, 256, endpoint=False)
    h1 = np.array([bouncing.hn_value(prof, [x]) for x in sgrid])
    assert h1.max() - h1.min() > 1e-4
    f_hi = bouncing.find_bjf(prof, 1, seed=[sgrid[int(np.argmax(h1))]])
    f_lo = bouncing.find_bjf(prof, 1, seed=[sgrid[int(np.argmin(h1))]])
    d = abs(f_hi.points[0] - f_lo.points[0])
    assert min(d, 2.0 - d) > 1e-3
    for f in (f_hi, f_lo):
        assert np.abs(bouncing.hn_gradient(prof, f.points)).max() < 1e-10


def test_sweep_deterministic(profile_pert):
    a = bouncing.find_bjf_sweep(profile_pert, 3, seeds=6, rng_seed=0)
    b = bouncing.find_bjf_sweep(profile_pert, 3, seeds=6, rng_seed=0)
    assert len(a) == len(b) >= 1
    for fa, fb in zip(a, b):
        assert np.abs(fa.points - fb.points).max() < 1e-12


def test_collapse_reported():
    # Seeding two points almost on top of each other in a region where the
    # energy pushes them together must fail loudly, not return garbage.
    prof = geometry.CurvatureProfile.constant(LENGTH, 1.0)
    with pytest.raises((bouncing.CollapseError, ValueError,
                        jacobi.DegenerateSegmentError, RuntimeError)):
        fld = bouncing.find_bjf(prof, 2)   # n=2 on K=1, L=2pi cannot exist
        raise bouncing.CollapseError(f"unexpected field {fld.points}")
