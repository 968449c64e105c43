import math

import numpy as np

from bouncing_lab import toda

SQRT2 = math.sqrt(2.0)


def test_heteroclinic_values():
    w, wp, wpp = toda.heteroclinic(0.0)
    assert w == 0.0
    assert abs(wp - 1.0 / SQRT2) < 1e-15
    assert wpp == 0.0
    w, wp, wpp = toda.heteroclinic(50.0)
    assert abs(w - 1.0) < 1e-15 and abs(wp) < 1e-15 and abs(wpp) < 1e-15
    w, _, _ = toda.heteroclinic(-50.0)
    assert abs(w + 1.0) < 1e-15


def test_heteroclinic_residual():
    rng = np.random.default_rng(2)
    x = rng.uniform(-10, 10, 1000)
    w, wp, wpp = toda.heteroclinic(x)
    assert np.abs(wpp + w - w ** 3).max() < 1e-12
    # derivative identities against finite differences
    h = 1e-6
    wp_fd = (toda.heteroclinic(x + h)[0] - toda.heteroclinic(x - h)[0]) / (2 * h)
    assert np.abs(wp - wp_fd).max() < 1e-9


def test_interaction_constants():
    c = toda.interaction_constants()
    assert abs(c.c0 - 2.0 * SQRT2 / 3.0) < 1e-12
    assert abs(c.c1 - 16.0) < 1e-10
    assert abs(c.cbar_sq - 24.0) < 1e-9
    assert abs(c.cbar_sq - SQRT2 * c.c1 / c.c0) < 1e-14
    assert c.c0 > 0 and c.c1 > 0


def test_toda_profile_center_and_asymptote():
    c = toda.interaction_constants()
    prof = toda.TodaProfile(kappa=0.06, sbar=1.0, epsilon=0.01)
    t0, dt0 = toda.toda_profile_eval(prof, 1.0)
    assert abs(t0 - (-math.log(0.06) + math.log(c.cbar))) < 1e-14
    assert dt0 == 0.0
    _, dfar = toda.toda_profile_eval(prof, 1.0 + 0.5)
    assert abs(dfar - prof.kappa / prof.epsilon) < 1e-8
    _, dneg = toda.toda_profile_eval(prof, 1.0 - 0.5)
    assert abs(dneg + prof.kappa / prof.epsilon) < 1e-8


def test_pure_toda_residual_and_first_integral():
    c = toda.interaction_constants()
    prof = toda.TodaProfile(kappa=0.05, sbar=0.3, epsilon=0.01)
    s = np.linspace(-0.4, 1.0, 100)
    t, dt = toda.toda_profile_eval(prof, s)
    # exact solution of eps^2 T'' = cbar^2 exp(-2T): check by 4th-order FD
    h = 1e-4
    vals = [toda.toda_profile_eval(prof, s + k * h)[0] for k in (-2, -1, 0, 1, 2)]
    second = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) \
        / (12 * h * h)
    res = prof.epsilon ** 2 * second - c.cbar_sq * np.exp(-2 * t)
    assert np.abs(res).max() < 1e-10
    first = prof.epsilon ** 2 * dt ** 2 + c.cbar_sq * np.exp(-2 * t)
    assert np.abs(first - prof.kappa ** 2).max() < 1e-8


def test_scaling_covariance():
    # T a solution implies T(k0 s + s0) - ln k0 is one: realized through the
    # parameter family itself.
    c = toda.interaction_constants()
    k0, s0 = 1.7, 0.4
    base = toda.TodaProfile(kappa=0.05, sbar=0.0, epsilon=0.01)
    scaled = toda.TodaProfile(kappa=0.05 * k0, sbar=-s0 / k0, epsilon=0.01)
    s = np.linspace(-0.2, 0.2, 50)
    t_base, _ = toda.toda_profile_eval(base, k0 * s + s0)
    t_scaled, _ = toda.toda_profile_eval(scaled, s)
    assert np.abs((t_base - math.log(k0)) - t_scaled).max() < 1e-12


def test_linearized_toda_checks():
    rep = toda.linearized_toda_checks()
    assert rep["eigen_identity_residual"] <= 1e-10
    assert rep["kernel_translation_residual"] <= 1e-10
    assert rep["kernel_scaling_residual"] <= 1e-10
    assert abs(rep["discrete_smallest_eigenvalue"] + 1.0) <= 1e-4


def test_corrector_integrals_window_invariance():
    ref = toda.corrector_reference_values()
    for window in (15.0, 25.0):
        out = toda.corrector_integrals(window=window)
        assert abs(out["I_X"] - ref["I_X"]) < 1e-6
        assert abs(out["I_Y"] - ref["I_Y"]) < 1e-6
        assert abs(out["I_Z"] - ref["I_Z"]) < 1e-6
        assert abs(out["rho"] - 2.0) < 1e-10
        for key in ("orth_X", "orth_Y", "orth_Z"):
            assert abs(out[key]) < 1e-8


def test_corrector_closed_forms():
    ref = toda.corrector_reference_values()
    assert abs(ref["I_X"] - 4 * SQRT2 / 15) < 1e-15
    assert abs(ref["I_Y"] + SQRT2 / 3) < 1e-15
    assert abs(ref["I_Z"] - 8 * SQRT2) < 1e-15
