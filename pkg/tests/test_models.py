import numpy as np
import pytest

from viscolab.errors import TraceBoundViolated
from viscolab.models import (
    ModelKind,
    ModelParams,
    VelocityGradient,
    conformation_from_stress,
    conformation_rhs,
    equilibrium_conformation,
    stress_from_conformation,
    stress_power,
    stress_rhs,
)

SHEAR = np.array([[3.0, 1.0], [1.0, 1.0]])
OB = ModelParams(1.0, 1.0, 0.5)
FP = ModelParams(1.0, 1.0, 0.5, "fene-p", 10.0)


def test_params_validation_messages():
    with pytest.raises(ValueError, match=r"epsilon must lie in \(0,1\)"):
        ModelParams(1.0, 1.0, 1.5)
    with pytest.raises(ValueError, match="extensibility b"):
        ModelParams(1.0, 1.0, 0.5, "fene-p")
    with pytest.raises(ValueError, match="b must exceed"):
        ModelParams(1.0, 1.0, 0.5, "fene-p", 2.0)
    with pytest.raises(ValueError, match="weissenberg"):
        ModelParams(1.0, 0.0, 0.5)
    with pytest.raises(ValueError, match="reynolds"):
        ModelParams(-1.0, 1.0, 0.5)
    with pytest.raises(ValueError, match="dim"):
        ModelParams(1.0, 1.0, 0.5, dim=4)


def test_kind_aliases():
    assert ModelKind.parse("Hookean") is ModelKind.OLDROYD_B
    assert ModelKind.parse("FENEP") is ModelKind.FENE_P
    assert ModelKind.parse("oldroyd_b") is ModelKind.OLDROYD_B
    with pytest.raises(ValueError):
        ModelKind.parse("giesekus")


def test_velocity_gradient_traceless():
    VelocityGradient([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError, match="traceless"):
        VelocityGradient([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        VelocityGradient(np.zeros((4, 4)))
    assert VelocityGradient.shear(2.0).matrix[0, 1] == 2.0
    assert not VelocityGradient.zero(3).matrix.any()


def test_rhs_examples():
    assert not conformation_rhs(OB, np.eye(2), np.zeros((2, 2))).any()
    np.testing.assert_array_equal(conformation_rhs(OB, SHEAR, [[0, 1], [0, 0]]), np.zeros((2, 2)))
    eq = equilibrium_conformation(FP)
    np.testing.assert_allclose(eq, 10 / 12 * np.eye(2))
    assert np.abs(conformation_rhs(FP, eq, np.zeros((2, 2)))).max() <= 1e-15
    fp3 = ModelParams(1.0, 3.0, 0.5, "fene-p", 50.0, 3)
    assert np.abs(conformation_rhs(fp3, equilibrium_conformation(fp3), np.zeros((3, 3)))).max() <= 1e-15


def test_rhs_is_exactly_symmetric_and_trace_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.standard_normal((3, 3))
        a = a @ a.T + np.eye(3)
        k = rng.standard_normal((3, 3))
        k -= np.trace(k) / 3 * np.eye(3)
        p = ModelParams(1.0, float(rng.uniform(0.1, 5)), 0.5, dim=3)
        r = conformation_rhs(p, a, k)
        assert np.array_equal(r, r.T)
        r0 = conformation_rhs(p, a, np.zeros((3, 3)))
        assert np.trace(r0) == pytest.approx(-(np.trace(a) - 3) / p.weissenberg, rel=1e-13, abs=1e-14)


def test_fenep_guard():
    with pytest.raises(TraceBoundViolated):
        conformation_rhs(FP, np.diag([6.0, 4.0]), np.zeros((2, 2)))
    with pytest.raises(TraceBoundViolated):
        stress_from_conformation(FP, np.diag([9.9, 0.2]))


def test_stress_examples():
    assert not stress_from_conformation(OB, np.eye(2)).any()
    np.testing.assert_allclose(stress_from_conformation(OB, SHEAR), [[1.0, 0.5], [0.5, 0.0]])
    assert np.abs(stress_from_conformation(FP, equilibrium_conformation(FP))).max() <= 1e-15
    np.testing.assert_allclose(conformation_from_stress(OB, stress_from_conformation(OB, SHEAR)), SHEAR)


def test_stress_rhs_is_image_of_conformation_rhs():
    a = np.array([[2.0, 0.3], [0.3, 0.7]])
    k = np.array([[0.2, 1.1], [-0.4, -0.2]])
    p = ModelParams(1.0, 1.7, 0.3)
    tau = stress_from_conformation(p, a)
    expected = p.epsilon / p.weissenberg * conformation_rhs(p, a, k)
    np.testing.assert_allclose(stress_rhs(p, tau, k), expected, rtol=1e-13, atol=1e-15)


def test_stress_power():
    assert stress_power(OB, SHEAR, [[0, 1], [0, 0]]) == pytest.approx(0.5)
