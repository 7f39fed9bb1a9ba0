"""Synchronized-noise coupling experiments.

Two Langevin chains driven by identical Brownian increments on their
shared vertices stay close when their data (boundary condition, tilt,
potential, volume) are close.  This module measures those couplings:

- contraction of the difference field for identical dynamics,
- Dirichlet vs periodic boundary conditions on the same box,
- different tilts / potentials / volumes on an inner observation cube,
- the induced difference between the stochastic elliptic solves
  (the field-dependent resolvent problems) on the coupled environments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import exact_gaussian, lattice, solvers
from .potentials import Potential


@dataclass
class CouplingReport:
    """Measured discrepancy between two coupled chains.

    ``tail_*`` arrays give the exceedance curve of the running sup-norm
    difference against thresholds s * log L; ``sup_diff`` is the mean (over
    trajectories) of the windowed supremum of the observable named in
    ``name``; ``fit`` holds fitted decay constants and exponents."""

    name: str
    horizon: float
    tail_s: np.ndarray | None = None
    tail_threshold: np.ndarray | None = None
    tail_exceedance: np.ndarray | None = None
    sup_diff: float = float("nan")
    sup_diff_err: float = float("nan")
    fit: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# identical dynamics: exact L2 contraction of the difference field


def contraction_curve(L: int, d: int, pot: Potential, xi=None,
                      n_steps: int = 4000, dt: float | None = None,
                      seed: int = 0, convention: str = "hamiltonian") -> dict:
    """Couple two chains with identical dynamics but different initial data
    and record the L2 norm of the difference field each step.

    Convexity of the interaction makes the difference equation dissipative:
    the norm is non-increasing at every step, exactly.  For quadratic
    interactions the difference solves a deterministic discrete heat
    equation and the asymptotic decay rate is the smallest Dirichlet
    eigenvalue of the interaction's quadratic form.
    """
    rng = np.random.default_rng(seed)
    if dt is None:
        dt = dyn.default_dt(pot, d)
    a = dyn.make_state(L, d, dyn.DIRICHLET, xi)
    b = dyn.make_state(L, d, dyn.DIRICHLET, xi)
    imask = solvers.interior_mask_nd(a.phi.shape)
    a.phi[...] = rng.standard_normal(a.phi.shape) * imask
    pair = dyn.CoupledPair(a, b, pot, pot, convention=convention)
    diffs = [float(np.linalg.norm(a.phi - b.phi))]
    for _ in range(n_steps):
        noise = rng.standard_normal(pair.master_shape)
        pair = dyn.coupled_step(pair, dt, noise)
        diffs.append(float(np.linalg.norm(pair.a.phi - pair.b.phi)))
    diffs = np.asarray(diffs)
    times = dt * np.arange(n_steps + 1)

    # fit the exponential rate on the clean part of the decay
    ok = diffs > max(1e-12, 1e-10 * diffs[0])
    n_ok = int(ok.sum())
    lo, hi = n_ok // 4, n_ok
    rate = float("nan")
    if hi - lo > 10:
        slope = np.polyfit(times[lo:hi], np.log(diffs[lo:hi]), 1)[0]
        rate = -float(slope)

    cube = lattice.centered_cube(L, d)
    c = float(pot.d2v(0.0))
    predicted = float("nan")
    if convention == "hamiltonian" and pot.lam == pot.Lam:
        predicted = exact_gaussian.smallest_dirichlet_eigenvalue(cube, c=c)
    return {
        "times": times,
        "diffs": diffs,
        "monotone": bool(np.all(np.diff(diffs) <= 1e-12 * diffs[0])),
        "fitted_rate": rate,
        "predicted_rate": predicted,
        "dt": dt,
    }


# ---------------------------------------------------------------------------
# Dirichlet vs periodic boundary conditions


def _burn_independently(pair: dyn.CoupledPair, dt: float, burn_time: float,
                        rng) -> dyn.CoupledPair:
    """Advance both components with independent noise (approximate
    equilibration before the synchronized window)."""
    n = int(np.ceil(burn_time / dt))
    shape = pair.master_shape
    for _ in range(n):
        na = pair._embed(rng.standard_normal(shape), pair.a)
        nb = pair._embed(rng.standard_normal(shape), pair.b)
        a = dyn.step(pair.a, dt, na, pair.pot_a, pair.convention, pair._wa)
        b = dyn.step(pair.b, dt, nb, pair.pot_b, pair.convention, pair._wb)
        pair = dyn.replace(pair, a=a, b=b)
    return pair


def _common_slices(pair: dyn.CoupledPair):
    """Index slices mapping each component into the master grid."""
    side = max(pair.a.side, pair.b.side)
    out = []
    for st in (pair.a, pair.b):
        if st.side == side:
            out.append((slice(None),) * st.d)
        elif st.bc == dyn.PERIODIC:
            out.append((slice(0, st.side),) * st.d)
        else:
            off = (side - st.side) // 2
            out.append((slice(off, off + st.side),) * st.d)
    return out


def couple_dirichlet_periodic(L: int, d: int, pot: Potential, xi=None,
                              A: float = 4.0, n_samples: int = 20,
                              seed: int = 0, dt: float | None = None,
                              s_grid=None) -> CouplingReport:
    """Couple the Dirichlet-zero and periodic-pinned chains on the box of
    radius L with shared noise on the common vertices over the window
    [0, A L^2 log L] after independent equilibration.

    Reports the exceedance curve of sup_{t,x} |phi_t - phi_per,t| against
    thresholds s log L, and the windowed sup over inner-cube edges
    (radius L//2) of the gradient difference."""
    if dt is None:
        dt = dyn.default_dt(pot, d)
    horizon = A * L * L * np.log(max(L, 2))
    burn_time = 2.0 * (2 * L) ** 2 / pot.lam
    n_win = int(np.ceil(horizon / dt))
    inner = (slice(L - L // 2, L + L // 2 + 1),) * d

    max_abs, max_grad = [], []
    for k in range(n_samples):
        rng = np.random.default_rng(seed + 7919 * k)
        a = dyn.make_state(L, d, dyn.DIRICHLET, xi)
        b = dyn.make_state(L, d, dyn.PERIODIC, xi)
        pair = dyn.CoupledPair(a, b, pot, pot, convention="hamiltonian")
        pair = _burn_independently(pair, dt, burn_time, rng)
        sa, sb = _common_slices(pair)
        m_abs = 0.0
        m_grad = 0.0
        for _ in range(n_win):
            noise = rng.standard_normal(pair.master_shape)
            pair = dyn.coupled_step(pair, dt, noise)
            diff = pair.a.phi[sb] - pair.b.phi
            m_abs = max(m_abs, float(np.abs(diff).max()))
            dfull = np.zeros(pair.master_shape)
            dfull[sb] = diff
            g = max(float(np.abs(np.diff(dfull[inner], axis=ax)).max())
                    for ax in range(d))
            m_grad = max(m_grad, g)
        max_abs.append(m_abs)
        max_grad.append(m_grad)

    tails = dyn.measure_dynamic_oscillation(max_abs, L, horizon,
                                            s_grid=s_grid)
    max_grad = np.asarray(max_grad)
    return CouplingReport(
        name="dirichlet_vs_periodic",
        horizon=horizon,
        tail_s=tails["s"],
        tail_threshold=tails["threshold"],
        tail_exceedance=tails["exceedance"],
        sup_diff=float(np.mean(max_abs)),
        sup_diff_err=float(np.std(max_abs) / np.sqrt(max(n_samples - 1, 1))),
        meta={"L": L, "d": d, "dt": dt, "burn_time": burn_time,
              "inner_grad_sup": float(max_grad.mean()),
              "inner_grad_sup_err": float(
                  max_grad.std() / np.sqrt(max(n_samples - 1, 1))),
              "max_abs": np.asarray(max_abs)},
    )


def inner_gradient_bias(L_values, d: int, pot: Potential, xi,
                        n_samples: int = 200, stride: int = 20,
                        seed: int = 0, exact: bool | None = None) -> dict:
    """sup over inner-cube edges (radius L//2) of |<grad phi(e)>| under the
    Dirichlet measure, fitted to C L^{-alpha}.

    The boundary condition pulls the mean gradient away from its bulk
    value only near the boundary, so the inner-cube bias decays
    algebraically in L.  For quadratic interactions the mean field is
    computed exactly by a linear solve; otherwise by Langevin sampling."""
    if exact is None:
        exact = pot.lam == pot.Lam
    xi = np.asarray(xi, dtype=float)
    sups, errs = [], []
    for j, L in enumerate(L_values):
        inner = (slice(L - L // 2, L + L // 2 + 1),) * d
        if exact:
            c = float(pot.d2v(0.0))
            cube = lattice.centered_cube(L, d)
            A = exact_gaussian.weighted_laplacian(cube, c=c)
            b = xi @ exact_gaussian.tilt_coefficients(cube, c=c)
            import scipy.sparse.linalg as spla
            mean = np.zeros(cube.shape)
            mean[lattice.interior_mask(cube)] = spla.spsolve(A.tocsc(), b)
            sup = max(float(np.abs(np.diff(mean[inner], axis=ax)).max())
                      for ax in range(d))
            sups.append(sup)
            errs.append(0.0)
        else:
            from . import hs
            env = hs.LangevinEnvironment(L, d, pot, xi, bc=dyn.DIRICHLET,
                                         seed=seed + 31 * j)
            acc = None
            for _ in range(n_samples):
                env.advance(stride)
                g = [np.diff(env.phi[inner], axis=ax) for ax in range(d)]
                if acc is None:
                    acc = [x.copy() for x in g]
                else:
                    acc = [a + x for a, x in zip(acc, g)]
            sup = max(float(np.abs(a / n_samples).max()) for a in acc)
            sups.append(sup)
            errs.append(sup / np.sqrt(n_samples))
    sups = np.asarray(sups)
    logL = np.log(np.asarray(L_values, dtype=float))
    coef = np.polyfit(logL, np.log(np.maximum(sups, 1e-300)), 1)
    pred = np.polyval(coef, logL)
    ss = np.sum((np.log(sups) - pred) ** 2)
    tot = np.sum((np.log(sups) - np.log(sups).mean()) ** 2)
    return {"L": np.asarray(L_values), "sup": sups,
            "sup_err": np.asarray(errs),
            "alpha": -float(coef[0]), "C": float(np.exp(coef[1])),
            "r_squared": float(1 - ss / tot) if tot > 0 else 1.0}


# ---------------------------------------------------------------------------
# different tilts / potentials / volumes


def couple_tilts_potentials(K, L: int, L_tilde: int, xi, xi_tilde,
                            pot: Potential, pot_tilde: Potential,
                            d: int = 2, n_samples: int = 8, seed: int = 0,
                            dt: float | None = None,
                            t_star: float | None = None,
                            A: float = 2.0,
                            independent_burn: bool = True) -> CouplingReport:
    """Couple two Dirichlet chains of radii L <= L_tilde with (possibly)
    different tilts and interactions, the smaller box embedded centered in
    the larger, and measure

        E[ sup_{t in [t*, t* + A K^2 log K], e in E(Q_K)} |grad phi - grad phi~| ]

    on the centered observation cube of radius K.  ``K`` may be a list, in
    which case the supremum is recorded for each radius from the same
    trajectories (it is non-decreasing in K by construction).  The window
    start defaults to t* = K_max^2."""
    K_list = [K] if np.isscalar(K) else list(K)
    K_max = max(K_list)
    if 2 * K_max > L or L > L_tilde:
        raise ValueError("need K <= L/2 <= L_tilde/2")
    if dt is None:
        dt = min(dyn.default_dt(pot, d), dyn.default_dt(pot_tilde, d))
    if t_star is None:
        t_star = float(K_max * K_max)
    horizon = A * K_max * K_max * np.log(max(K_max, 2))
    lam = min(pot.lam, pot_tilde.lam)
    burn_time = 2.0 * (2 * L_tilde) ** 2 / lam
    n_pre = int(np.ceil(t_star / dt))
    n_win = int(np.ceil(horizon / dt))

    sups = np.zeros((n_samples, len(K_list)))
    for s in range(n_samples):
        rng = np.random.default_rng(seed + 104729 * s)
        a = dyn.make_state(L, d, dyn.DIRICHLET, xi)
        b = dyn.make_state(L_tilde, d, dyn.DIRICHLET, xi_tilde)
        pair = dyn.CoupledPair(a, b, pot, pot_tilde,
                               convention="hamiltonian")
        if independent_burn:
            pair = _burn_independently(pair, dt, burn_time, rng)
        else:
            # shared-noise burn from the same initial state: identical
            # configurations then stay identically equal
            for _ in range(int(np.ceil(burn_time / dt))):
                pair = dyn.coupled_step(
                    pair, dt, rng.standard_normal(pair.master_shape))
        for _ in range(n_pre):
            pair = dyn.coupled_step(pair, dt,
                                    rng.standard_normal(pair.master_shape))
        sa, _ = _common_slices(pair)
        center = L_tilde  # index of the origin in the master grid
        for _ in range(n_win):
            pair = dyn.coupled_step(pair, dt,
                                    rng.standard_normal(pair.master_shape))
            big = pair.b.phi
            small = np.full(pair.master_shape, np.nan)
            small[sa] = pair.a.phi
            for kk, Kv in enumerate(K_list):
                box = (slice(center - Kv, center + Kv + 1),) * d
                g = max(float(np.abs(
                    np.diff(small[box] - big[box], axis=ax)).max())
                    for ax in range(d))
                sups[s, kk] = max(sups[s, kk], g)

    # tilts act by shifting the argument of V', so the perturbation size is
    # sup_g |V'(g - xi_i) - V~'(g - xi~_i)| maximized over directions
    grid = np.linspace(-6.0, 6.0, 2001)
    xi = np.asarray(xi, dtype=float)
    xi_t = np.asarray(xi_tilde, dtype=float)
    vprime_gap = max(
        float(np.abs(pot.dv(grid - xi[i]) - pot_tilde.dv(grid - xi_t[i]))
              .max()) for i in range(d))
    j = len(K_list) - 1
    return CouplingReport(
        name="tilt_potential_coupling",
        horizon=horizon,
        sup_diff=float(sups[:, j].mean()),
        sup_diff_err=float(sups[:, j].std()
                           / np.sqrt(max(n_samples - 1, 1))),
        meta={"K": K_list, "L": L, "L_tilde": L_tilde, "t_star": t_star,
              "dt": dt, "vprime_gap": vprime_gap,
              "by_K": sups.mean(axis=0), "samples": sups,
              "xi": np.asarray(xi, dtype=float),
              "xi_tilde": np.asarray(xi_tilde, dtype=float)},
    )


# ---------------------------------------------------------------------------
# comparing the stochastic elliptic solves on coupled environments


def _default_source(a_edges, d):
    """Vertex source div*(a grad l_{e_1}) (flux a along the first axis),
    supported near the boundary for constant conductances."""
    g = [a_edges[0]] + [np.zeros_like(a_edges[i]) for i in range(1, d)]
    return solvers.div_star(g, d)


def compare_hs_solutions(pot: Potential, pot_tilde: Potential, K,
                         L: int, d: int = 2, source_fn=None,
                         n_samples: int = 4, T_max: float = 20.0,
                         t_couple: float | None = None, seed: int = 0,
                         dt: float | None = None,
                         boundary: str = "dirichlet") -> CouplingReport:
    """Pathwise comparison of the field-dependent resolvent solves on two
    coupled environments with the same box.

    Two same-size Dirichlet chains with interactions V, V~ are coupled by
    shared noise; on each trajectory the parabolic flows

        d/dt w + div*(a(phi_t) grad w) = 0,   w(0) = f(phi_0)

    are integrated alongside the coupled dynamics (conductances a = w V'',
    refreshed every step from the current fields) and time-integrated into
    v = int w dt.  Reports the per-edge mean of |grad v - grad v~|^2 on the
    centered cube of radius K, for each K when a list is given."""
    K_list = [K] if np.isscalar(K) else list(K)
    K_max = max(K_list)
    if K_max > L:
        raise ValueError("observation cube exceeds the box")
    if dt is None:
        dt = min(dyn.default_dt(pot, d), dyn.default_dt(pot_tilde, d))
    if t_couple is None:
        t_couple = float(K_max * K_max)
    lam = min(pot.lam, pot_tilde.lam)
    burn_time = 2.0 * (2 * L) ** 2 / lam
    n_pre = int(np.ceil(t_couple / dt))
    n_int = int(np.ceil(T_max / dt))
    weights = dyn._hamiltonian_weights(L, d)
    step_fn = solvers.parabolic_cd_step if boundary == "dirichlet" \
        else solvers.parabolic_cn_step
    imask = solvers.interior_mask_nd((2 * L + 1,) * d)

    def conductances(phi, p):
        return [w * p.d2v(np.diff(phi, axis=ax) - p_xi)
                for ax, (w, p_xi) in enumerate(zip(weights, np.zeros(d)))]

    vals = np.zeros((n_samples, len(K_list)))
    for s in range(n_samples):
        rng = np.random.default_rng(seed + 1299709 * s)
        a = dyn.make_state(L, d, dyn.DIRICHLET, None)
        b = dyn.make_state(L, d, dyn.DIRICHLET, None)
        pair = dyn.CoupledPair(a, b, pot, pot_tilde,
                               convention="hamiltonian")
        pair = _burn_independently(pair, dt, burn_time, rng)
        for _ in range(n_pre):
            pair = dyn.coupled_step(pair, dt,
                                    rng.standard_normal(pair.master_shape))
        ca = conductances(pair.a.phi, pot)
        cb = conductances(pair.b.phi, pot_tilde)
        fn = source_fn if source_fn is not None else \
            (lambda c_edges: _default_source(c_edges, d))
        wa = fn(ca) * imask
        wb = fn(cb) * imask
        va = np.zeros_like(wa)
        vb = np.zeros_like(wb)
        for _ in range(n_int):
            va += dt * wa
            vb += dt * wb
            wa = step_fn(wa, ca, dt, d)
            wb = step_fn(wb, cb, dt, d)
            pair = dyn.coupled_step(pair, dt,
                                    rng.standard_normal(pair.master_shape))
            ca = conductances(pair.a.phi, pot)
            cb = conductances(pair.b.phi, pot_tilde)
        for kk, Kv in enumerate(K_list):
            box = (slice(L - Kv, L + Kv + 1),) * d
            num, cnt = 0.0, 0
            for ax in range(d):
                gdiff = np.diff(va[box] - vb[box], axis=ax)
                num += float((gdiff ** 2).sum())
                cnt += gdiff.size
            vals[s, kk] = num / cnt

    j = len(K_list) - 1
    return CouplingReport(
        name=f"resolvent_comparison_{boundary}",
        horizon=T_max,
        sup_diff=float(vals[:, j].mean()),
        sup_diff_err=float(vals[:, j].std()
                           / np.sqrt(max(n_samples - 1, 1))),
        meta={"K": K_list, "L": L, "dt": dt, "t_couple": t_couple,
              "by_K": vals.mean(axis=0), "samples": vals},
    )
