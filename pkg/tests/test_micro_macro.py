import math

import numpy as np
import pytest

from viscolab import kernels
from viscolab.errors import NotSPD
from viscolab.homogeneous import HomogeneousScenario, relaxation_conformation, steady_shear_conformation
from viscolab.micro_macro import (
    STAT_BAND,
    Ensemble,
    compare_micro_macro,
    em_advance,
    em_step,
    empirical_conformation,
    empirical_stress,
    ensemble_entropy_gaussian,
    expected_em_conformation,
    gaussian_moment_variance,
    ou_exact_transition,
    sample_gaussian_init,
    stationarity_test,
)
from viscolab.models import ModelParams

P = ModelParams(1.0, 1.0, 0.5)
P2 = ModelParams(1.0, 2.0, 0.5)
SHEAR_K = [[0.0, 1.0], [0.0, 0.0]]


def _sigma(A, n):
    return np.sqrt(gaussian_moment_variance(A) / n)


def fixed_ensemble(X, params=P):
    X = np.asarray(X, dtype=float)
    return Ensemble(X, kernels.seed_streams(0, X.shape[0]), params)


def test_sampling_identity_covariance():
    n = 100_000
    ens = sample_gaussian_init(np.eye(2), n, 1)
    a = empirical_conformation(ens)
    assert np.all(np.abs(a - np.eye(2)) <= 3 * math.sqrt(2 / n))


def test_sampling_anisotropic_covariance():
    n = 100_000
    a0 = np.diag([4.0, 1.0])
    a = empirical_conformation(sample_gaussian_init(a0, n, 2))
    assert np.all(np.abs(a - a0) <= STAT_BAND * _sigma(a0, n))
    assert a[0, 0] / a[1, 1] == pytest.approx(4.0, rel=0.05)


def test_sampling_is_deterministic_and_seed_sensitive():
    a = sample_gaussian_init(np.eye(2), 2, 7)
    b = sample_gaussian_init(np.eye(2), 2, 7)
    c = sample_gaussian_init(np.eye(2), 2, 8)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.states, b.states)
    assert not np.array_equal(a.X, c.X)


def test_sampling_offset_selects_substreams():
    whole = sample_gaussian_init(np.eye(2), 10, 3)
    tail = sample_gaussian_init(np.eye(2), 4, 3, offset=6)
    assert np.array_equal(whole.X[6:], tail.X)


def test_sampling_rejects_non_spd():
    with pytest.raises(NotSPD):
        sample_gaussian_init(np.diag([1.0, -1.0]), 10, 0)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        fixed_ensemble(np.ones((1, 2)))
    with pytest.raises(ValueError):
        Ensemble(np.ones((3, 2)), np.zeros(3, dtype=np.int64), P)
    with pytest.raises(ValueError):
        fixed_ensemble(np.ones((3, 2)), ModelParams(1, 1, 0.5, "fene-p", 10.0))


def test_noise_free_step_decays_by_drift_factor():
    ens = fixed_ensemble([[1.0, 2.0], [-3.0, 0.5]], P2)
    dt = 0.01
    out = em_step(ens, None, dt, noise=False)
    np.testing.assert_allclose(out.X, ens.X * (1 - dt / (2 * 2.0)), rtol=1e-15)
    assert out.t == pytest.approx(dt)
    many = em_advance(ens, None, 1e-4, 10_000, noise=False)
    np.testing.assert_allclose(many.X, ens.X * math.exp(-1.0 / 4.0), rtol=1e-4)


def test_zero_step_returns_same_ensemble():
    ens = sample_gaussian_init(np.eye(2), 5, 1)
    assert em_step(ens, None, 0.0) is ens
    assert em_advance(ens, None, 1e-3, 0) is ens
    with pytest.raises(ValueError):
        em_step(ens, None, -1e-3)
    with pytest.raises(ValueError, match="0.1"):
        em_step(ens, None, 0.5)


def test_empirical_moment_examples():
    ens = fixed_ensemble(np.tile([1.0, 0.0], (4, 1)))
    np.testing.assert_array_equal(empirical_conformation(ens), [[1, 0], [0, 0]])
    np.testing.assert_allclose(empirical_stress(ens), [[0.0, 0.0], [0.0, -0.5]])
    X = np.array([[math.sqrt(3), 1 / math.sqrt(3)], [-math.sqrt(3), -1 / math.sqrt(3)],
                  [0.0, math.sqrt(5 / 3)], [0.0, -math.sqrt(5 / 3)]])
    ens = fixed_ensemble(X)
    np.testing.assert_allclose(empirical_conformation(ens), [[1.5, 0.5], [0.5, 1.0]], rtol=1e-14)


def test_ensemble_entropy_examples():
    X = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    assert ensemble_entropy_gaussian(fixed_ensemble(X)) == 0.0
    assert ensemble_entropy_gaussian(fixed_ensemble(math.sqrt(2) * X)) == pytest.approx(
        0.5 * (2 - math.log(4)), rel=1e-12)
    with pytest.raises(NotSPD):
        ensemble_entropy_gaussian(fixed_ensemble(np.tile([1.0, 0.0], (4, 1))))


def test_gaussian_moment_variance():
    np.testing.assert_array_equal(gaussian_moment_variance(np.eye(2)), [[2, 1], [1, 2]])
    a = np.array([[3.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(gaussian_moment_variance(a), [[18, 4], [4, 2]])


def test_stationarity_at_identity():
    res = stationarity_test(P, 20_000, 5, n_steps=200, record_stride=50)
    assert res.passed and res.max_z <= STAT_BAND
    assert res.times[-1] == pytest.approx(0.2)


def test_em_recursion_is_first_order_weak_approximation():
    a0 = np.diag([2.0, 0.5])
    t_end = 1.0
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = round(t_end / dt)
        em = expected_em_conformation(a0, SHEAR_K, dt, n, 1.0)[-1]
        ref = expected_em_conformation(a0, SHEAR_K, 1e-5, 100_000, 1.0)[-1]
        errs.append(np.abs(em - ref).max())
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= a / b <= 2.2


def test_em_recursion_matches_relaxation_closed_form_as_dt_vanishes():
    a0 = np.diag([2.0, 0.5])
    em = expected_em_conformation(a0, None, 1e-4, 5000, 2.0)
    exact = relaxation_conformation(a0, 2.0, np.arange(5001) * 1e-4)
    assert np.abs(em - exact).max() <= 1e-4


def test_ensemble_tracks_em_recursion():
    n = 50_000
    a0 = np.diag([2.0, 0.5])
    ens = em_advance(sample_gaussian_init(a0, n, 9), SHEAR_K, 0.01, 50)
    expected = expected_em_conformation(a0, SHEAR_K, 0.01, 50, 1.0)[-1]
    assert np.all(np.abs(empirical_conformation(ens) - expected) <= STAT_BAND * _sigma(expected, n))


def test_ou_exact_transition_oracle():
    n = 50_000
    a0 = np.diag([2.0, 0.5])
    we, t = 1.0, 0.5
    rng = np.random.default_rng(4)
    X = rng.standard_normal((n, 2)) @ np.sqrt(a0)
    Y = ou_exact_transition(X, t, we, rng)
    exact = relaxation_conformation(a0, we, t)
    emp = Y.T @ Y / n
    assert np.all(np.abs(emp - exact) <= STAT_BAND * _sigma(exact, n))
    ens = em_advance(sample_gaussian_init(a0, n, 4), None, 1e-3, 500)
    assert np.all(np.abs(empirical_conformation(ens) - exact) <= STAT_BAND * (_sigma(exact, n) + 1e-3))


def test_compare_micro_macro_at_equilibrium():
    sc = HomogeneousScenario(P, np.eye(2), None, 1e-2, 0.2, 5)
    rep = compare_micro_macro(sc, 5_000, 1, n_repeats=2)
    assert rep.passed and rep.n_particles == 5_000 and rep.n_repeats == 2
    assert rep.empirical.shape == rep.macro.shape == (5, 2, 2)
    np.testing.assert_array_equal(rep.macro, np.broadcast_to(np.eye(2), (5, 2, 2)))
    assert rep.max_z < STAT_BAND


def test_compare_micro_macro_shear_fixed_point(tmp_path):
    fp = steady_shear_conformation(1.0, 1.0)
    sc = HomogeneousScenario(P, fp, SHEAR_K, 1e-3, 0.2, 50)
    rep = compare_micro_macro(sc, 10_000, 2, n_repeats=2)
    assert rep.passed
    path = rep.to_csv(tmp_path / "mm.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["t", "Ahat11", "Ahat12", "Ahat22"]
    assert lines[0].endswith("pass") and len(lines) == 6


def test_compare_micro_macro_is_deterministic():
    sc = HomogeneousScenario(P, np.diag([2.0, 0.5]), None, 1e-2, 0.1, 5)
    a = compare_micro_macro(sc, 1_000, 3, n_repeats=2)
    b = compare_micro_macro(sc, 1_000, 3, n_repeats=2)
    assert np.array_equal(a.empirical, b.empirical) and np.array_equal(a.stderr, b.stderr)


def test_compare_micro_macro_detects_wrong_macro():
    sc = HomogeneousScenario(P, np.diag([2.0, 0.5]), None, 1e-2, 0.5, 10)
    rep = compare_micro_macro(sc, 20_000, 4, n_repeats=2)
    assert rep.passed
    rep.macro[-1] += 0.2
    assert np.any(np.abs(rep.empirical - rep.macro) > rep.tolerance)


def test_compare_micro_macro_validation():
    with pytest.raises(ValueError):
        compare_micro_macro(HomogeneousScenario(ModelParams(1, 1, 0.5, "fene-p", 10.0), np.eye(2)), 10, 0)
    with pytest.raises(ValueError):
        compare_micro_macro(HomogeneousScenario(P, np.eye(2)), 10, 0, n_repeats=0)
