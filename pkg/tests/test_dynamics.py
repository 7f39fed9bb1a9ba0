import io

import numpy as np
import pytest

from gradphi import dynamics as dyn
from gradphi import exact_gaussian as eg
from gradphi import lattice
from gradphi.potentials import logcosh_perturbed, quadratic

QUAD = quadratic(1.0)
LOGC = logcosh_perturbed(0.5)


class TestStepping:
    def test_dt_stability_guard(self):
        state = dyn.make_state(3, 2)
        with pytest.raises(ValueError):
            dyn.step(state, 1.0, None, QUAD)

    def test_dirichlet_boundary_stays_zero(self):
        rng = np.random.default_rng(0)
        state = dyn.make_state(3, 2, xi=(0.4, 0.0))
        for _ in range(50):
            state = dyn.step(state, 0.05, rng.standard_normal((7, 7)), LOGC,
                             convention="hamiltonian")
        bm = lattice.boundary_mask(lattice.centered_cube(3, 2))
        assert np.all(state.phi[bm] == 0.0)

    def test_periodic_repinning_preserves_gradients(self):
        rng = np.random.default_rng(1)
        state = dyn.make_state(3, 2, bc=dyn.PERIODIC)
        state = dyn.replace(state, phi=rng.standard_normal((6, 6)))
        noise = rng.standard_normal((6, 6))
        out = dyn.step(state, 0.05, noise, QUAD)
        assert out.phi[0, 0] == pytest.approx(0.0, abs=1e-14)
        # shifting the input field by a constant leaves the output unchanged
        shifted = dyn.replace(state, phi=state.phi + 5.0)
        out2 = dyn.step(shifted, 0.05, noise, QUAD)
        assert np.allclose(out.phi, out2.phi, atol=1e-12)

    def test_zero_tilt_zero_field_is_drift_fixed_point(self):
        state = dyn.make_state(3, 2)
        out = dyn.step(state, 0.05, None, LOGC, convention="hamiltonian")
        assert np.all(out.phi == 0.0)

    def test_drift_conventions_differ_only_near_boundary(self):
        rng = np.random.default_rng(2)
        phi = rng.standard_normal((9, 9))
        d1 = dyn.drift_dirichlet(phi, np.zeros(2), QUAD, 2, "single")
        d2 = dyn.drift_dirichlet(phi, np.zeros(2), QUAD, 2, "hamiltonian")
        # interior-interior edges carry weight 2 under the hamiltonian form
        assert np.allclose(d2[3:-3, 3:-3], 2.0 * d1[3:-3, 3:-3])


class TestTrapezoidalStepper:
    def test_matches_explicit_drift_to_first_order(self):
        rng = np.random.default_rng(3)
        phi = rng.standard_normal((7, 7))
        phi *= lattice.interior_mask(lattice.centered_cube(3, 2))
        dt = 1e-5
        stepper = dyn.TrapezoidalStepper(3, 2, dyn.DIRICHLET, np.zeros(2),
                                         LOGC, dt, "hamiltonian")
        out_tr = stepper.step(phi.copy(), None)
        state = dyn.FieldState(3, 2, dyn.DIRICHLET, np.zeros(2), phi.copy())
        out_eu = dyn.step_dirichlet(state, dt, None, LOGC, "hamiltonian").phi
        assert np.allclose(out_tr, out_eu, atol=1e-8)

    def test_exact_gaussian_invariance(self):
        # for quadratic V the scheme preserves the Gaussian law at any dt:
        # the empirical variance of phi(center) matches G(x0,x0) closely
        L, d = 3, 2
        cfg = dyn.SamplerConfig(L, d, QUAD, n_samples=4000, stride=4,
                                burn_A=2.0, seed=11, batch=4, dt=0.1)
        cube = lattice.centered_cube(L, d)
        G = eg.dirichlet_covariance(cube)
        center = cube.n_interior // 2
        vals = [phi[(slice(None),) + (L,) * d] for phi in
                dyn.sample_equilibrium(cfg)]
        v = np.var(np.concatenate([np.atleast_1d(x) for x in vals]), ddof=1)
        exact = G[center, center]
        rel_err = 3.0 / np.sqrt(len(vals) * 4 / 10)  # crude 3 sigma for var
        assert abs(v - exact) < rel_err * exact


class TestCoupledPair:
    def test_identical_components_stay_bitwise_equal(self):
        rng = np.random.default_rng(4)
        a = dyn.make_state(3, 2)
        b = dyn.make_state(3, 2)
        pair = dyn.CoupledPair(a, b, LOGC, LOGC, convention="hamiltonian")
        for _ in range(25):
            pair = dyn.coupled_step(pair, 0.05,
                                    rng.standard_normal(pair.master_shape))
        assert np.array_equal(pair.a.phi, pair.b.phi)

    def test_coupled_step_preserves_marginal_update(self):
        # one component of a coupled pair evolves exactly like an
        # uncoupled chain fed the same noise
        rng = np.random.default_rng(5)
        a = dyn.make_state(3, 2)
        b = dyn.make_state(4, 2)
        pair = dyn.CoupledPair(a, b, QUAD, QUAD, convention="hamiltonian")
        solo = dyn.make_state(4, 2)
        w = dyn._hamiltonian_weights(4, 2)
        for _ in range(20):
            noise = rng.standard_normal(pair.master_shape)
            pair = dyn.coupled_step(pair, 0.05, noise)
            solo = dyn.step(solo, 0.05, noise, QUAD, "hamiltonian", w)
        assert np.array_equal(pair.b.phi, solo.phi)

    def test_quadratic_difference_field_is_deterministic(self):
        rng = np.random.default_rng(6)
        a = dyn.make_state(3, 2)
        phi0 = rng.standard_normal((7, 7))
        phi0 *= lattice.interior_mask(lattice.centered_cube(3, 2))
        a = dyn.replace(a, phi=phi0)
        b = dyn.make_state(3, 2)
        pair = dyn.CoupledPair(a, b, QUAD, QUAD, convention="hamiltonian")
        det = phi0.copy()
        w = dyn._hamiltonian_weights(3, 2)
        for _ in range(30):
            noise = rng.standard_normal(pair.master_shape)
            pair = dyn.coupled_step(pair, 0.05, noise)
            det = dyn.step(dyn.FieldState(3, 2, dyn.DIRICHLET, np.zeros(2),
                                          det),
                           0.05, None, QUAD, "hamiltonian", w).phi
        assert np.allclose(pair.a.phi - pair.b.phi, det, atol=1e-12)

    def test_mismatched_dimension_rejected(self):
        with pytest.raises(ValueError):
            dyn.CoupledPair(dyn.make_state(3, 2), dyn.make_state(3, 3),
                            QUAD, QUAD)


class TestStationarity:
    def test_periodic_mean_gradient_zero(self):
        cfg = dyn.SamplerConfig(4, 2, LOGC, xi=(0.3, 0.0), bc=dyn.PERIODIC,
                                n_samples=400, stride=5, burn_A=2.0, seed=7,
                                batch=2)
        acc = np.zeros(2)
        count = 0
        for phi in dyn.sample_equilibrium(cfg):
            for ax in range(2):
                acc[ax] += float(
                    np.mean(np.roll(phi, -1, axis=ax + 1) - phi))
            count += 1
        assert np.all(np.abs(acc / count) < 5e-3)

    def test_stationary_drift_mean_vanishes(self):
        cfg = dyn.SamplerConfig(3, 2, LOGC, n_samples=600, stride=5,
                                burn_A=2.0, seed=8, batch=2)
        acc = None
        vals = []
        for phi in dyn.sample_equilibrium(cfg):
            drift = dyn.drift_dirichlet(phi, cfg.xi, LOGC, 2, "hamiltonian",
                                        dyn._hamiltonian_weights(3, 2))
            vals.append(drift[:, 3, 3].mean())
            acc = drift if acc is None else acc + drift
        vals = np.asarray(vals)
        err = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean()) < 4 * err + 1e-3


class TestOscillation:
    def test_exceedance_curve_monotone(self):
        rng = np.random.default_rng(9)
        maxima = np.abs(rng.standard_normal(200)) * 2.0
        out = dyn.measure_dynamic_oscillation(maxima, L=8, horizon=100.0)
        assert np.all(np.diff(out["exceedance"]) <= 0)
        assert out["exceedance"][0] >= out["exceedance"][-1]


class TestSnapshots:
    def test_roundtrip(self):
        rng = np.random.default_rng(10)
        state = dyn.make_state(3, 2, xi=(0.2, -0.1))
        state = dyn.replace(state, phi=rng.standard_normal((7, 7)))
        buf = io.BytesIO()
        dyn.write_snapshot(buf, state, seed=42, dt=0.03125, step_index=17)
        buf.seek(0)
        out, meta = dyn.read_snapshot(buf)
        assert np.array_equal(out.phi, state.phi)
        assert np.array_equal(out.xi, state.xi)
        assert meta["seed"] == 42
        assert meta["dt"] == 0.03125
        assert meta["step_index"] == 17
        assert out.bc == dyn.DIRICHLET

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError):
            dyn.read_snapshot(io.BytesIO(b"JUNKxxxxxxxxxxxx"))
