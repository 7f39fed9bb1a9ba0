import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradphi import potentials


class TestQuadratic:
    def test_values_and_derivatives(self):
        pot = potentials.quadratic(2.0)
        t = np.linspace(-3, 3, 13)
        assert np.allclose(pot.v(t), t * t)
        assert np.allclose(pot.dv(t), 2.0 * t)
        assert np.allclose(pot.d2v(t), 2.0)
        assert pot.lam == pot.Lam == 2.0

    def test_rejects_nonpositive_coefficient(self):
        with pytest.raises(ValueError):
            potentials.quadratic(0.0)
        with pytest.raises(ValueError):
            potentials.quadratic(-1.0)

    def test_validation_clean(self):
        rep = potentials.validate(potentials.quadratic(1.0))
        assert rep.ok
        assert rep.dv_fd_error < 1e-6
        assert rep.d2v_fd_error < 1e-6


class TestLogcoshPerturbed:
    @given(a=st.floats(-0.9, 3.0).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=25, deadline=None)
    def test_derivatives_consistent(self, a):
        pot = potentials.logcosh_perturbed(a)
        t = np.linspace(-4, 4, 41)
        h = 1e-5
        dv_fd = (pot.v(t + h) - pot.v(t - h)) / (2 * h)
        d2v_fd = (pot.dv(t + h) - pot.dv(t - h)) / (2 * h)
        assert np.max(np.abs(dv_fd - pot.dv(t))) < 1e-7
        assert np.max(np.abs(d2v_fd - pot.d2v(t))) < 1e-7

    @given(a=st.floats(-0.9, 3.0).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=25, deadline=None)
    def test_uniform_convexity_window(self, a):
        pot = potentials.logcosh_perturbed(a)
        t = np.linspace(-12, 12, 4001)
        d2 = pot.d2v(t)
        assert d2.min() >= pot.lam - 1e-12
        assert d2.max() <= pot.Lam + 1e-12
        assert pot.lam > 0

    def test_symmetry(self):
        pot = potentials.logcosh_perturbed(0.5)
        t = np.linspace(0, 6, 61)
        assert np.allclose(pot.v(t), pot.v(-t))

    def test_validation_clean(self):
        rep = potentials.validate(potentials.logcosh_perturbed(0.5))
        assert rep.ok

    def test_holder_constant_bounds_increments(self):
        pot = potentials.logcosh_perturbed(1.5)
        rng = np.random.default_rng(1)
        s = rng.uniform(-5, 5, 300)
        t = rng.uniform(-5, 5, 300)
        lhs = np.abs(pot.d2v(s) - pot.d2v(t))
        rhs = pot.holder_M * np.abs(s - t) ** pot.gamma
        assert np.all(lhs <= rhs + 1e-12)


class TestFromConfig:
    def test_roundtrip(self):
        pot = potentials.from_config("logcosh_perturbed", [0.5])
        assert pot.name == "logcosh_perturbed"
        assert pot.params == (0.5,)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            potentials.from_config("cubic", [1.0])
