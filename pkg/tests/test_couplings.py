import numpy as np
import pytest

from gradphi import couplings as cpl
from gradphi import dynamics as dyn
from gradphi.potentials import logcosh_perturbed, quadratic

QUAD = quadratic(1.0)
LOGC = logcosh_perturbed(0.5)


class TestContraction:
    def test_monotone_and_rate_for_quadratic(self):
        out = cpl.contraction_curve(6, 2, QUAD, n_steps=2500, seed=0)
        assert out["monotone"]
        assert np.isfinite(out["predicted_rate"])
        ratio = out["fitted_rate"] / out["predicted_rate"]
        assert 0.5 < ratio < 2.0

    def test_monotone_for_nongaussian(self):
        out = cpl.contraction_curve(5, 2, LOGC, n_steps=800, seed=1)
        assert out["monotone"]
        assert np.isnan(out["predicted_rate"])


class TestDirichletPeriodic:
    def test_tail_curve_shape(self):
        rep = cpl.couple_dirichlet_periodic(5, 2, QUAD, A=0.5, n_samples=6,
                                            seed=2)
        assert np.all(np.diff(rep.tail_exceedance) <= 0)
        s = rep.tail_s
        ex = rep.tail_exceedance
        assert ex[np.searchsorted(s, 3.0)] <= ex[np.searchsorted(s, 1.0)]
        assert rep.sup_diff > 0
        assert rep.meta["inner_grad_sup"] >= 0


class TestInnerGradientBias:
    def test_quadratic_exact_decay(self):
        out = cpl.inner_gradient_bias([6, 10, 16], 2, QUAD, (0.5, 0.0))
        assert out["alpha"] > 0
        assert out["r_squared"] > 0.9
        assert np.all(np.diff(out["sup"]) < 0)


class TestTiltPotentialCoupling:
    def test_identical_dynamics_zero(self):
        rep = cpl.couple_tilts_potentials([2], 6, 6, (0.2, 0.0), (0.2, 0.0),
                                          QUAD, QUAD, n_samples=2, seed=3,
                                          A=0.5, independent_burn=False)
        assert rep.sup_diff == pytest.approx(0.0, abs=1e-12)
        assert rep.meta["vprime_gap"] == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_observation_radius(self):
        rep = cpl.couple_tilts_potentials([2, 3], 8, 8, (0.1, 0.0),
                                          (0.4, 0.0), QUAD, QUAD,
                                          n_samples=2, seed=4, A=0.5)
        sups = rep.meta["samples"]
        assert np.all(np.diff(sups, axis=1) >= 0)
        assert rep.meta["vprime_gap"] == pytest.approx(0.3, abs=1e-9)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            cpl.couple_tilts_potentials([5], 6, 6, (0, 0), (0, 0),
                                        QUAD, QUAD)


class TestResolventComparison:
    def test_identical_quadratic_zero(self):
        rep = cpl.compare_hs_solutions(QUAD, QUAD, [2], 5, n_samples=1,
                                       T_max=4.0, seed=5)
        assert rep.sup_diff == pytest.approx(0.0, abs=1e-20)

    def test_mismatched_potentials_finite(self):
        rep = cpl.compare_hs_solutions(LOGC, quadratic(1.25), [2, 4], 6,
                                       n_samples=2, T_max=8.0, seed=6)
        assert np.isfinite(rep.sup_diff)
        assert rep.sup_diff > 0
