import json
import math

import numpy as np
import pytest

from bouncing_lab import geometry


def test_profile_periodicity():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.3, 0.05], [0.1, 0.0])
    s = np.linspace(-3.0, 9.0, 57)
    dev = np.abs(prof.kappa(s) - prof.kappa(s + 2 * np.pi)).max()
    assert dev < 1e-13


def test_profile_from_samples_roundtrip():
    prof = geometry.CurvatureProfile(2.0, 0.7, [0.2], [-0.1])
    s = np.linspace(0, 2.0, 64, endpoint=False)
    prof2 = geometry.CurvatureProfile.from_samples(2.0, prof.kappa(s))
    assert np.abs(prof2.kappa(s) - prof.kappa(s)).max() < 1e-13


def test_profile_json_roundtrip():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.2, 0.0], [0.0, 0.3])
    text = json.dumps(prof.to_json())
    prof2 = geometry.CurvatureProfile.from_json(text)
    s = np.linspace(0, 2 * np.pi, 31)
    assert np.abs(prof.kappa(s) - prof2.kappa(s)).max() == 0.0


def test_sup_inf_refined():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.3], [0.4])
    inf_k, sup_k = prof.sup_inf()
    amp = math.hypot(0.3, 0.4)
    assert abs(sup_k - (1.0 + amp)) < 1e-10
    assert abs(inf_k - (1.0 - amp)) < 1e-10


def test_tube_metric_invariants():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    tube = geometry.TubeMetric(prof, 0.4)
    s = np.linspace(0, 2 * np.pi, 11)
    assert np.all(tube.e_coeff(s, tube.half_width) >= 0.25)
    assert np.abs(tube.e_coeff(s, 0.0) - 1.0).max() == 0.0
    # d_t E(s, 0) = 0: t = 0 is a geodesic of the patch
    h = 1e-6
    dte = (tube.e_coeff(s, h) - tube.e_coeff(s, -h)) / (2 * h)
    assert np.abs(dte).max() < 1e-9


def test_tube_constraint_enforced():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 4.0)
    with pytest.raises(ValueError):
        geometry.TubeMetric(prof, 0.4)
    tube = geometry.TubeMetric.widest(prof)
    assert 4.0 * tube.half_width ** 2 <= geometry.TUBE_CONSTRAINT + 1e-12


def test_gauss_curvature_of_tube():
    prof = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    tube = geometry.TubeMetric(prof, 0.4)
    assert geometry.gauss_curvature_of_tube(tube, 0.3, 0.0) == 1.0
    got = geometry.gauss_curvature_of_tube(tube, 0.0, 0.3)
    assert abs(got - 1.0 / (1.0 - 0.045)) < 1e-14
    prof2 = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.3], [0.0])
    tube2 = geometry.TubeMetric(prof2, 0.4)
    assert abs(geometry.gauss_curvature_of_tube(tube2, np.pi, 0.0) - 0.7) < 1e-14
    with pytest.raises(ValueError):
        geometry.gauss_curvature_of_tube(tube, 0.0, 0.41)


def test_brioschi_consistency_on_profile():
    prof = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.2], [0.1])
    tube = geometry.TubeMetric(prof, 0.4)
    for s in np.linspace(0, 2 * np.pi, 17):
        assert abs(geometry.gauss_curvature_of_tube(tube, s, 0.0)
                   - prof.kappa(s)) < 1e-12


def test_curvature_derivative_under_perturbation():
    pert = geometry.MetricPerturbation(np.cos)
    assert geometry.curvature_derivative_under_perturbation(pert, 0.0) == -1.0
    assert abs(geometry.curvature_derivative_under_perturbation(pert, np.pi / 2)) < 1e-15
    zero = geometry.MetricPerturbation(lambda s: 0.0)
    assert geometry.curvature_derivative_under_perturbation(zero, 1.3) == 0.0


def test_existence_precheck_examples():
    k1 = geometry.CurvatureProfile.constant(2 * np.pi, 1.0)
    assert geometry.existence_precheck(k1, 3) is geometry.Verdict.EXISTS
    assert geometry.existence_precheck(k1, 1) is geometry.Verdict.CANNOT_EXIST
    mid = geometry.CurvatureProfile(2 * np.pi, 1.0, [0.5], [0.0])
    assert geometry.existence_precheck(mid, 2) is geometry.Verdict.INCONCLUSIVE


def test_existence_precheck_constant_iff():
    # Constant curvature: the screening must reproduce the sharp condition
    # pi^2 n^2 vs L^2 K for n = 1..8 (boundary cases report Inconclusive).
    length = 2 * np.pi
    for k0 in (0.3, 1.0, 2.3, 4.0):
        prof = geometry.CurvatureProfile.constant(length, k0)
        for n in range(1, 9):
            verdict = geometry.existence_precheck(prof, n)
            lhs, rhs = np.pi ** 2 * n ** 2, length ** 2 * k0
            if lhs > rhs:
                assert verdict is geometry.Verdict.EXISTS
            elif lhs < rhs:
                assert verdict is geometry.Verdict.CANNOT_EXIST
            else:
                assert verdict is geometry.Verdict.INCONCLUSIVE
