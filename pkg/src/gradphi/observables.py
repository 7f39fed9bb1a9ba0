"""Surface-tension and homogenization observables.

Per-site conventions.  The Hamiltonian double-counts interior-interior
edges, so every edge sum below carries the weights w(e) in {1, 2} and the
per-site normalizer is the vertex count |Q_L| = (2L+1)^d.  With these
conventions quadratic(c) gives the exact values

    D sigma_L(xi) = 2c (|Q_L^o|/|Q_L|) xi + boundary correction,
    D^2 sigma_L   = exact_gaussian.exact_hessian(L, d, c),

which pin the signs: the gradient is minus the mean tilt-derivative sum,
and the Hessian is the diagonal V''-term minus the covariance of those
sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice, hs, diagnostics
from . import dynamics as dyn
from .potentials import Potential
from .reporting import EstimatorResult


# ---------------------------------------------------------------------------
# edge statistics of Dirichlet snapshots


def _edge_series(L: int, d: int, pot: Potential, xi, n_samples: int,
                 stride: int, seed: int, batch: int = 1,
                 burn_A: float = 4.0, dt: float | None = None):
    """(S, T): per-snapshot weighted edge sums, shapes (n, batch, d).

    S_i = sum_e w(e) V'(grad_i phi(e) - xi_i)   (tilt-derivative sum)
    T_i = sum_e w(e) V''(grad_i phi(e) - xi_i)  (diagonal Hessian term)
    """
    xi = np.zeros(d) if xi is None else np.asarray(xi, dtype=float)
    cfg = dyn.SamplerConfig(L=L, d=d, pot=pot, xi=xi, n_samples=n_samples,
                            stride=stride, seed=seed, batch=batch,
                            burn_A=burn_A, dt=dt)
    weights = dyn._hamiltonian_weights(L, d)
    S = np.zeros((n_samples, batch, d))
    T = np.zeros((n_samples, batch, d))
    ax_sum = tuple(range(1, d + 1))
    for k, phi in enumerate(dyn.sample_equilibrium(cfg)):
        if batch == 1 and phi.ndim == d:
            phi = phi[None]
        for i in range(d):
            g = np.diff(phi, axis=1 + i) - xi[i]
            S[k, :, i] = np.sum(weights[i] * pot.dv(g), axis=ax_sum)
            T[k, :, i] = np.sum(weights[i] * pot.d2v(g), axis=ax_sum)
    return S, T


def _combine_chains(per_chain_vals, per_chain_errs):
    vals = np.asarray(per_chain_vals)
    errs = np.asarray(per_chain_errs)
    value = vals.mean(axis=0)
    b = len(vals)
    if b > 1:
        stderr = vals.std(axis=0, ddof=1) / np.sqrt(b)
    else:
        stderr = errs[0]
    return value, stderr


def grad_sigma(L: int, d: int, pot: Potential, xi=None,
               n_samples: int = 400, stride: int = 10, seed: int = 0,
               batch: int = 4, burn_A: float = 4.0,
               dt: float | None = None) -> EstimatorResult:
    """First tilt-derivative of the surface tension,
    (D sigma_L)_i = -(1/|Q_L|) <S_i>."""
    S, _ = _edge_series(L, d, pot, xi, n_samples, stride, seed, batch,
                        burn_A, dt)
    nq = (2 * L + 1) ** d
    per_chain, per_err = [], []
    for c in range(S.shape[1]):
        m = np.empty(d)
        e = np.empty(d)
        for i in range(d):
            m[i], e[i] = diagnostics.batch_means(S[:, c, i])
        per_chain.append(-m / nq)
        per_err.append(e / nq)
    value, stderr = _combine_chains(per_chain, per_err)
    tau = diagnostics.autocorrelation_time(S[:, 0, 0]).tau
    return EstimatorResult(name="grad_sigma", value=value, stderr=stderr,
                           n_samples=n_samples * S.shape[1], tau=tau,
                           seed=seed,
                           meta={"L": L, "d": d, "pot": pot.name,
                                 "xi": None if xi is None else list(xi)})


def hessian_sigma(L: int, d: int, pot: Potential, xi=None,
                  n_samples: int = 400, stride: int = 10, seed: int = 0,
                  batch: int = 4, burn_A: float = 4.0,
                  dt: float | None = None) -> EstimatorResult:
    """Hessian of the surface tension:
    (D^2 sigma_L)_ij = (1/|Q_L|) (delta_ij <T_i> - Cov(S_i, S_j)),
    with cross-chain (or delete-block jackknife) error bars."""
    S, T = _edge_series(L, d, pot, xi, n_samples, stride, seed, batch,
                        burn_A, dt)
    nq = (2 * L + 1) ** d

    def chain_estimate(Sc, Tc):
        cov = np.cov(Sc.T, ddof=1) if len(Sc) > 1 else np.zeros((d, d))
        return (np.diag(Tc.mean(axis=0)) - np.atleast_2d(cov)) / nq

    per_chain = [chain_estimate(S[:, c], T[:, c]) for c in range(S.shape[1])]
    per_chain = np.stack(per_chain)
    value = per_chain.mean(axis=0)
    if S.shape[1] > 1:
        stderr = per_chain.std(axis=0, ddof=1) / np.sqrt(S.shape[1])
    else:
        _, stderr = diagnostics.jackknife(
            np.concatenate([S[:, 0], T[:, 0]], axis=1),
            lambda b: chain_estimate(b[:, :d], b[:, d:]))
    asym = float(np.max(np.abs(value - value.T)))
    value = 0.5 * (value + value.T)
    stderr = 0.5 * np.sqrt(stderr ** 2 + stderr.T ** 2)
    tau = diagnostics.autocorrelation_time(S[:, 0, 0]).tau
    return EstimatorResult(name="hessian_sigma", value=value, stderr=stderr,
                           n_samples=n_samples * S.shape[1], tau=tau,
                           seed=seed,
                           meta={"L": L, "d": d, "pot": pot.name,
                                 "asymmetry": asym,
                                 "xi": None if xi is None else list(xi)})


def ahom_finite(L: int, d: int, pot: Potential, xi=None,
                **kwargs) -> EstimatorResult:
    """The finite-volume homogenized matrix abar(Q_L): identical to the
    surface-tension Hessian (same formula, same samples), relabeled."""
    res = hessian_sigma(L, d, pot, xi, **kwargs)
    res.name = "ahom_finite"
    return res


def sigma_by_integration(L: int, d: int, pot: Potential, xi,
                         n_nodes: int = 6, n_samples: int = 300,
                         stride: int = 10, seed: int = 0, batch: int = 2,
                         burn_A: float = 4.0) -> EstimatorResult:
    """sigma_L(xi) by Gauss-Legendre thermodynamic integration of
    t -> xi . D sigma_L(t xi) over [0, 1]."""
    xi = np.asarray(xi, dtype=float)
    nodes, wts = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * (nodes + 1.0)
    wts = 0.5 * wts
    total, var = 0.0, 0.0
    for k, (t, w) in enumerate(zip(nodes, wts)):
        g = grad_sigma(L, d, pot, t * xi, n_samples=n_samples,
                       stride=stride, seed=seed + 101 * k, batch=batch,
                       burn_A=burn_A)
        total += w * float(xi @ g.value)
        var += (w ** 2) * float(xi ** 2 @ np.asarray(g.stderr) ** 2)
    return EstimatorResult(name="sigma_by_integration", value=total,
                           stderr=float(np.sqrt(var)),
                           n_samples=n_nodes * n_samples * batch, seed=seed,
                           meta={"L": L, "d": d, "pot": pot.name,
                                 "xi": list(xi), "n_nodes": n_nodes})


def hessian_by_differencing(L: int, d: int, pot: Potential, xi=None,
                            h: float = 0.1, n_samples: int = 400,
                            stride: int = 10, seed: int = 0, batch: int = 4,
                            burn_A: float = 4.0) -> EstimatorResult:
    """Central second differences of sigma_L, evaluated as first
    differences of the gradient (the same divided-difference combination
    of sigma values, without the quadrature noise); matched seeds at the
    +/- tilts for variance reduction."""
    xi = np.zeros(d) if xi is None else np.asarray(xi, dtype=float)
    cols, errs = [], []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        gp = grad_sigma(L, d, pot, xi + e, n_samples=n_samples,
                        stride=stride, seed=seed + 7 * j, batch=batch,
                        burn_A=burn_A)
        gm = grad_sigma(L, d, pot, xi - e, n_samples=n_samples,
                        stride=stride, seed=seed + 7 * j, batch=batch,
                        burn_A=burn_A)
        cols.append((np.asarray(gp.value) - np.asarray(gm.value)) / (2 * h))
        errs.append(np.hypot(np.asarray(gp.stderr),
                             np.asarray(gm.stderr)) / (2 * h))
    value = np.stack(cols, axis=1)
    stderr = np.stack(errs, axis=1)
    value = 0.5 * (value + value.T)
    stderr = 0.5 * np.sqrt(stderr ** 2 + stderr.T ** 2)
    flags = []
    diag = np.abs(np.diag(value))
    if np.any(np.diag(stderr) > 0.5 * np.maximum(diag, 1e-300)):
        flags.append("noise-dominated differencing")
    return EstimatorResult(name="hessian_by_differencing", value=value,
                           stderr=stderr, n_samples=2 * d * n_samples
                           * batch, seed=seed,
                           meta={"L": L, "d": d, "pot": pot.name, "h": h,
                                 "flags": flags})


# ---------------------------------------------------------------------------
# dual matrix on Q_L (Neumann route)


def astar_finite(L: int, d: int, pot: Potential, xi=None,
                 n_samples: int = 8, T_max: float | None = None,
                 seed: int = 0, burn_A: float = 2.0,
                 decorrelate: float = 6.0) -> EstimatorResult:
    """The dual matrix astar(Q_L) from the Neumann problem on E(Q_L)
    under the Dirichlet measure: (astar^{-1})_ij = <h_i, u_j>/|Q| with
    deterministic sources h_i = div*_Q(grad l_{e_i}), conductances
    w(e) V''; the matrix is inverted at the end (ill-conditioning
    flagged)."""
    env = hs.LangevinEnvironment(L, d, pot, xi, bc=dyn.DIRICHLET,
                                 seed=seed, burn_A=burn_A)
    side = 2 * L + 1
    cube = lattice.centered_cube(L, d)
    masks = lattice.edge_set_masks(cube)
    per_dir = (side - 1) * (side - 2) ** (d - 1)
    if T_max is None:
        T_max = 2.0 * side ** 2 / pot.lam
    dt = env.dt
    n_steps = int(np.ceil(T_max / dt))
    h = []
    for i in range(d):
        g = [m.astype(float) if j == i else np.zeros_like(m, dtype=float)
             for j, m in enumerate(masks)]
        h.append(_div_star(g, d))
    h = np.stack(h)
    lat_axes = tuple(range(1, d + 1))
    samples, tails = [], []
    for _ in range(n_samples):
        w = h.copy()
        integral = np.zeros((d, d))
        a = env.conductance()
        rec_t, rec_q = [], []
        q = np.tensordot(h, w, axes=(lat_axes, lat_axes))
        for k in range(n_steps):
            integral += dt * q
            w = _cn_step(w, a, dt, d)
            env.advance(1)
            a = env.conductance()
            q = np.tensordot(h, w, axes=(lat_axes, lat_axes))
            if (k + 1) % 4 == 0:
                rec_t.append((k + 1) * dt)
                rec_q.append(q.copy())
        total, tf, _ = hs._apply_tail(integral, np.asarray(rec_t),
                                      np.stack(rec_q))
        samples.append(total / per_dir)
        tails.append(tf)
        env.advance(int(np.ceil(decorrelate / dt)))
    samples = np.stack(samples)
    minv = samples.mean(axis=0)
    minv = 0.5 * (minv + minv.T)
    flags = []
    condition = float(np.linalg.cond(minv))
    if condition > 1e6:
        flags.append("ill-conditioned inversion")
    value = np.linalg.inv(minv)
    if n_samples > 1:
        _, err = diagnostics.jackknife(
            samples, lambda s: np.linalg.inv(
                0.5 * (np.mean(s, axis=0) + np.mean(s, axis=0).T)),
            n_blocks=min(n_samples, 10))
    else:
        err = np.zeros_like(value)
    return EstimatorResult(name="astar_finite", value=value, stderr=err,
                           n_samples=n_samples, seed=seed,
                           meta={"L": L, "d": d, "pot": pot.name,
                                 "T_max": T_max, "condition": condition,
                                 "tail_fraction": float(np.mean(tails)),
                                 "inverse_value": minv, "flags": flags})


def _div_star(g: list, d: int) -> np.ndarray:
    from . import solvers
    return solvers.div_star(g, d)


def _cn_step(w, a, dt, d):
    from . import solvers
    return solvers.parabolic_cn_step(w, a, dt, d)


# ---------------------------------------------------------------------------
# subadditive quantities on triadic cubes


@dataclass
class SubadditiveRecord:
    m: int
    abar: np.ndarray            # abar(box_m)
    astar: np.ndarray           # astar(box_m)
    abar_next: np.ndarray       # abar(box_{m+1})
    astar_inv: np.ndarray
    astar_inv_next: np.ndarray
    tau: float
    tau_err: float
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _positive_top(mat: np.ndarray) -> float:
    return float(max(np.linalg.eigvalsh(0.5 * (mat + mat.T)).max(), 0.0))


def triadic_anchors(m: int) -> list:
    """Anchors of the 3^d translates of box_m tiling box_{m+1} (offsets
    into a torus holding box_{m+1}); cube side is 2*3^m + 1 vertices."""
    s = 2 * 3 ** m
    return [(i * s, j * s) for i in range(3) for j in range(3)]


def subadditivity_defect(scales, pot: Potential, xi=None, d: int = 2,
                         n_samples: int = 4, T_dirichlet: float = 40.0,
                         T_neumann: float = 80.0, seed: int = 0,
                         burn_time: float | None = None) -> list:
    """Defects tau_m = sup_p (nu(box_m,p) - nu(box_{m+1},p))_+ +
    sup_q (nu*(box_m,q) - nu*(box_{m+1},q))_+ over unit balls, i.e. the
    positive-part top eigenvalues of the successive differences of abar
    and of astar^{-1} (quadratic representations nu = p.abar p/2,
    nu* = q.astar^{-1} q/2).

    Each scale pair (m, m+1) shares one periodic environment; the box_m
    value averages the 3^d translates tiling box_{m+1} (common random
    numbers, so the defect's error is far below the marginal errors)."""
    records = []
    for m in scales:
        side_m = 2 * 3 ** m + 1
        side_m1 = 2 * 3 ** (m + 1) + 1
        L_env = 3 ** (m + 1) + 1
        if burn_time is None:
            # relax the slowest torus Fourier mode: rate ~ pi^2 lam / N^2
            bt = 0.15 * (2 * L_env) ** 2 / pot.lam
        else:
            bt = burn_time
        env = hs.LangevinEnvironment(L_env, d, pot, xi, bc=dyn.PERIODIC,
                                     seed=seed + 1000 * m, init="gaussian",
                                     burn_time=bt)
        groups = [(triadic_anchors(m), side_m), ([(0,) * d], side_m1)]
        ra = hs.homogenized_matrices(env, groups, T_dirichlet, n_samples,
                                     kind="dirichlet")
        rn = hs.homogenized_matrices(env, groups, T_neumann, n_samples,
                                     kind="neumann")
        a_s = ra[0].meta["samples"] - ra[1].meta["samples"]
        ai_s = rn[0].meta["samples"] - rn[1].meta["samples"]

        def tau_stat(pair):
            da = pair[:, 0].mean(axis=0)
            di = pair[:, 1].mean(axis=0)
            return 0.5 * _positive_top(da) + 0.5 * _positive_top(di)

        paired = np.stack([a_s, ai_s], axis=1)
        tau, tau_err = diagnostics.jackknife(
            paired, tau_stat, n_blocks=min(n_samples, 10))
        flags = []
        if tau_err > max(tau, 1e-300):
            flags.append("error bar exceeds defect magnitude")
        for r in ra + rn:
            if r.tail_fraction > 0.1:
                flags.append("large truncation tail")
                break
        records.append(SubadditiveRecord(
            m=m, abar=ra[0].value, astar=np.linalg.inv(rn[0].value),
            abar_next=ra[1].value, astar_inv=rn[0].value,
            astar_inv_next=rn[1].value, tau=float(tau),
            tau_err=float(tau_err), flags=flags,
            meta={"abar_err": ra[0].stderr, "astar_inv_err": rn[0].stderr,
                  "n_samples": n_samples}))
    return records


# ---------------------------------------------------------------------------
# convergence-rate fit


@dataclass
class RateFit:
    beta: float
    C: float
    r2: float
    L_values: list
    diffs: list
    flags: list = field(default_factory=list)


def convergence_rate_fit(L_values, d: int, pot: Potential, xi=None,
                         reference: np.ndarray | None = None,
                         hessians: dict | None = None,
                         **sampler_kwargs) -> RateFit:
    """Least-squares fit of log ||D^2 sigma_L - ref|| against log L.

    ``reference`` defaults to the largest-L estimate (dropped from the
    fit); pass the known limit when available (quadratic V), since
    differencing against a finite-L reference contaminates the slope.
    """
    L_values = sorted(L_values)
    if hessians is None:
        base_seed = sampler_kwargs.pop("seed", 0)
        hessians = {}
        for k, L in enumerate(L_values):
            hessians[L] = hessian_sigma(L, d, pot, xi, seed=base_seed + k,
                                        **sampler_kwargs).value
    if reference is None:
        ref = np.asarray(hessians[L_values[-1]])
        fit_L = L_values[:-1]
    else:
        ref = np.asarray(reference)
        fit_L = list(L_values)
    diffs = [float(np.linalg.norm(np.asarray(hessians[L]) - ref))
             for L in fit_L]
    flags = []
    if any(dv <= 0 for dv in diffs):
        flags.append("zero difference; fit skipped for that L")
    xs = np.log([L for L, dv in zip(fit_L, diffs) if dv > 0])
    ys = np.log([dv for dv in diffs if dv > 0])
    if len(xs) < 2:
        return RateFit(beta=np.nan, C=np.nan, r2=np.nan,
                       L_values=fit_L, diffs=diffs,
                       flags=flags + ["insufficient points"])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if np.any(np.diff(diffs) > 0):
        flags.append("non-monotone differences")
    if r2 < 0.5:
        flags.append("inconclusive fit (R^2 < 0.5)")
    return RateFit(beta=float(-slope), C=float(np.exp(intercept)), r2=r2,
                   L_values=fit_L, diffs=diffs, flags=flags)


# ---------------------------------------------------------------------------
# scaling-limit CLT check


@dataclass
class CLTReport:
    R: int
    variance: float
    variance_err: float
    prediction: float
    skewness: float
    kurtosis: float
    kurtosis_err: float
    flags: list = field(default_factory=list)


def gaussian_bump(y):
    """Smooth vector test function f(y) = exp(-|y|^2/2) e_1."""
    r2 = np.sum(y ** 2, axis=-1)
    out = np.zeros(y.shape)
    out[..., 0] = np.exp(-0.5 * r2)
    return out


def divergence_free_bump(y):
    """f = (-d2 g, d1 g) with g the Gaussian bump: divergence-free."""
    r2 = np.sum(y ** 2, axis=-1)
    g = np.exp(-0.5 * r2)
    out = np.zeros(y.shape)
    out[..., 0] = y[..., 1] * g
    out[..., 1] = -y[..., 0] * g
    return out


def _edge_coefficients(n: int, d: int, R: float, f) -> np.ndarray:
    """c(e) = R^{-d/2} f_i(x/R) on torus edges (x, x+e_i), centered."""
    coords = np.arange(n) - n // 2
    grid = np.stack(np.meshgrid(*([coords] * d), indexing="ij"), axis=-1)
    vals = f(grid / R) * R ** (-d / 2.0)
    return np.moveaxis(vals, -1, 0)        # (d, lattice)


def clt_variance_prediction(c_edges: np.ndarray, ahom: np.ndarray) -> float:
    """Exact variance of sum_e c(e) grad phi(e) for the Gaussian field
    with precision abar div* grad (abar in the Hessian normalization),
    via FFT; this is the discrete rendering of the homogenized limit
    integral grad u . abar grad u + (the f-projection)."""
    d = c_edges.shape[0]
    n = c_edges.shape[1]
    chat = np.stack([np.fft.fftn(c_edges[i]) for i in range(d)])
    k = 2 * np.pi * np.fft.fftfreq(n)
    D = []
    for i in range(d):
        shape = [1] * d
        shape[i] = n
        D.append(np.exp(1j * k.reshape(shape)) - 1.0)
    abar = np.asarray(ahom, dtype=float)
    num = np.zeros((n,) * d, dtype=complex)
    den = np.zeros((n,) * d)
    for i in range(d):
        num = num + np.conj(D[i]) * chat[i]
        for j in range(d):
            den = den + abar[i, j] * (np.conj(D[i]) * D[j]).real
    mask = den > 1e-12
    proj = np.zeros((n,) * d)
    proj[mask] = np.abs(num[mask]) ** 2 / den[mask]
    # Var = (1/n^d) sum_k |D* . chat|^2 / (D* abar D)
    return float(proj.sum() / n ** d)


def clt_check(R_values, L: int, d: int, pot: Potential,
              test_function=gaussian_bump, n_samples: int = 10000,
              seed: int = 0, ahom: np.ndarray | None = None) -> list:
    """Distributional check of F_R = R^{-d/2} sum_{x,i} f_i(x/R)
    grad_i phi(x) on the periodic field: sample variance vs the
    homogenized prediction, standardized skewness/kurtosis.

    For quadratic V the stationary law is sampled exactly (FFT draws);
    otherwise Langevin snapshots are used.
    """
    n = 2 * L
    rng = np.random.default_rng(seed)
    if ahom is None:
        if pot.lam == pot.Lam:
            ahom = 2.0 * pot.lam * np.eye(d)
        else:
            ahom = hessian_sigma(min(L, 10), d, pot, seed=seed).value
    reports = []
    quadratic_case = pot.lam == pot.Lam
    if not quadratic_case:
        cfg = dyn.SamplerConfig(L=L, d=d, pot=pot, bc=dyn.PERIODIC,
                                n_samples=n_samples, stride=5, seed=seed,
                                burn_A=1.0)
        snaps = dyn.sample_equilibrium(cfg)
    for R in R_values:
        c_edges = [_edge_coefficients(n, d, R, test_function)]
        ce = c_edges[0]
        fvals = np.empty(n_samples)
        for k in range(n_samples):
            if quadratic_case:
                phi = gaussian_torus_sample_cached(n, d, 2.0 * pot.lam, rng)
            else:
                phi = next(snaps)
            acc = 0.0
            for i in range(d):
                acc += np.sum(ce[i] * (np.roll(phi, -1, axis=i) - phi))
            fvals[k] = acc
        var, var_err = diagnostics.variance_with_error(fvals)
        z = (fvals - fvals.mean()) / fvals.std(ddof=1)
        kurt = float(np.mean(z ** 4))
        _, kurt_err = diagnostics.jackknife(z, lambda s: np.mean(
            ((s - np.mean(s)) / np.std(s)) ** 4))
        skew = float(np.mean(z ** 3))
        pred = clt_variance_prediction(ce, ahom)
        flags = []
        if L < 8 * R:
            flags.append("L/R ratio below threshold")
        reports.append(CLTReport(R=R, variance=float(var),
                                 variance_err=float(var_err),
                                 prediction=pred, skewness=skew,
                                 kurtosis=kurt,
                                 kurtosis_err=float(kurt_err),
                                 flags=flags))
    return reports


def gaussian_torus_sample_cached(n, d, c, rng):
    return hs.gaussian_torus_sample(n, d, c, rng)


# ---------------------------------------------------------------------------
# Hessian regularity probe


def hessian_modulus_probe(L: int, d: int, pot: Potential, xi_pairs,
                          **sampler_kwargs) -> dict:
    """Table of ||D^2 sigma_L(xi) - D^2 sigma_L(xi')|| against |xi - xi'|
    with a fitted Holder exponent; noise-dominated pairs are dropped."""
    rows = []
    cache = {}

    def hess(xi):
        key = tuple(np.round(np.asarray(xi, dtype=float), 12))
        if key not in cache:
            cache[key] = hessian_sigma(L, d, pot, np.asarray(xi),
                                       **sampler_kwargs)
        return cache[key]

    for xi_a, xi_b in xi_pairs:
        ha, hb = hess(xi_a), hess(xi_b)
        diff = float(np.linalg.norm(np.asarray(ha.value)
                                    - np.asarray(hb.value)))
        err = float(np.linalg.norm(np.hypot(np.asarray(ha.stderr),
                                            np.asarray(hb.stderr))))
        sep = float(np.linalg.norm(np.asarray(xi_a, dtype=float)
                                   - np.asarray(xi_b, dtype=float)))
        rows.append({"separation": sep, "modulus": diff, "error": err,
                     "noise_dominated": diff < 2.0 * err})
    usable = [r for r in rows if not r["noise_dominated"]
              and r["separation"] > 0 and r["modulus"] > 0]
    if len(usable) >= 2:
        xs = np.log([r["separation"] for r in usable])
        ys = np.log([r["modulus"] for r in usable])
        slope, _ = np.polyfit(xs, ys, 1)
        exponent = float(slope)
    else:
        exponent = float("nan")
    return {"rows": rows, "holder_exponent": exponent}
