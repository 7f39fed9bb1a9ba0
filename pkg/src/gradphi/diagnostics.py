"""Statistical toolkit (autocorrelation, batch means, jackknife) and the
functional-inequality checks: Brascamp-Lieb, exponential moments, spectral
gap, and the deterministic multiscale Poincare inequality.

All inequality checks return three-state reports; a "fail" requires a
violation beyond 4 combined standard errors, so sampling noise is never
reported as a counterexample to a theorem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice, exact_gaussian
from . import dynamics as dyn
from .potentials import Potential


# ---------------------------------------------------------------------------
# statistics


@dataclass
class AutocorrResult:
    tau: float                  # integrated autocorrelation time (iid: 0.5)
    window: int
    flags: list = field(default_factory=list)

    def __float__(self):
        return float(self.tau)


def autocorrelation_time(series, c: float = 6.0) -> AutocorrResult:
    """Integrated autocorrelation time with the self-consistent window
    (smallest W such that W >= c * tau(W))."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = float(np.dot(x, x) / n)
    if var <= 0 or not np.isfinite(var):
        return AutocorrResult(tau=np.nan, window=0,
                              flags=["degenerate series"])
    # FFT autocovariance
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    rho = acov / acov[0]
    tau = 0.5
    window = 0
    for k in range(1, n // 2):
        tau += rho[k]
        window = k
        if window >= c * tau:
            return AutocorrResult(tau=float(max(tau, 0.5)), window=window)
    return AutocorrResult(tau=float(max(tau, 0.5)), window=window,
                          flags=["window did not converge"])


def batch_means(series, n_batches: int | None = None):
    """(mean, stderr) with batch sizes chosen from the autocorrelation
    time when not specified."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n_batches is None:
        tau = autocorrelation_time(x).tau
        if not np.isfinite(tau):
            return float(x.mean()), 0.0
        bsize = max(1, int(np.ceil(10.0 * tau)))
        n_batches = max(8, min(64, n // bsize))
    n_batches = max(2, min(n_batches, n))
    bsize = n // n_batches
    b = x[: n_batches * bsize].reshape(n_batches, bsize).mean(axis=1)
    return float(x.mean()), float(b.std(ddof=1) / np.sqrt(n_batches))


def jackknife(samples, statistic, n_blocks: int = 20):
    """Delete-block jackknife of ``statistic(samples)`` along axis 0."""
    samples = np.asarray(samples)
    n = len(samples)
    n_blocks = min(n_blocks, n)
    full = statistic(samples)
    reps = []
    for b in range(n_blocks):
        sel = np.ones(n, dtype=bool)
        sel[b::n_blocks] = False
        reps.append(statistic(samples[sel]))
    reps = np.asarray(reps, dtype=float)
    err = np.sqrt((n_blocks - 1) / n_blocks
                  * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return full, err


def variance_with_error(series, n_blocks: int = 20):
    return jackknife(series, lambda s: np.var(np.asarray(s), ddof=1),
                     n_blocks)


# ---------------------------------------------------------------------------
# observables with analytic vertical derivatives


@dataclass
class FieldObservable:
    """A scalar functional of the field with analytically supplied
    vertical derivatives (an array like phi, zero on the boundary)."""

    name: str
    fn: callable
    partials: callable

    def __call__(self, phi):
        return self.fn(phi)


def standard_suite(L: int, d: int, seed: int = 0) -> list:
    """Ten observables on the Dirichlet cube: linear, local polynomial,
    and bounded nonlinear functionals, all with analytic derivatives."""
    rng = np.random.default_rng(seed)
    side = 2 * L + 1
    ctr = (L,) * d
    x1 = (L, L + 1) + (L,) * (d - 2)
    imask = np.zeros((side,) * d, dtype=bool)
    imask[(slice(1, -1),) * d] = True
    coeff = rng.uniform(-1.0, 1.0, size=(side,) * d) * imask

    def indicator(x):
        e = np.zeros((side,) * d)
        e[x] = 1.0
        return e

    e0, e1 = indicator(ctr), indicator(x1)
    suite = [
        FieldObservable("site", lambda p: p[ctr], lambda p: e0),
        FieldObservable("edge_gradient", lambda p: p[x1] - p[ctr],
                        lambda p: e1 - e0),
        FieldObservable("linear_random",
                        lambda p: float(np.sum(coeff * p)),
                        lambda p: coeff),
        FieldObservable("interior_mean",
                        lambda p: float(p[imask].mean()),
                        lambda p: imask / imask.sum()),
        FieldObservable("site_square", lambda p: p[ctr] ** 2,
                        lambda p: 2.0 * p[ctr] * e0),
        FieldObservable("site_pair", lambda p: p[ctr] * p[x1],
                        lambda p: p[x1] * e0 + p[ctr] * e1),
        FieldObservable("sum_squares",
                        lambda p: float(np.sum(p * p * imask)),
                        lambda p: 2.0 * p * imask),
        FieldObservable("sin_site", lambda p: np.sin(p[ctr]),
                        lambda p: np.cos(p[ctr]) * e0),
        FieldObservable("tanh_site", lambda p: np.tanh(p[ctr]),
                        lambda p: (1.0 - np.tanh(p[ctr]) ** 2) * e0),
        FieldObservable("site_cubic", lambda p: p[ctr] ** 3,
                        lambda p: 3.0 * p[ctr] ** 2 * e0),
    ]
    return suite


def linear_observable(coeff: np.ndarray, name: str = "linear"):
    c = np.asarray(coeff, dtype=float)
    return FieldObservable(name, lambda p: float(np.sum(c * p)),
                           lambda p: c)


# ---------------------------------------------------------------------------
# inequality reports


@dataclass
class InequalityReport:
    name: str
    lhs: float
    lhs_err: float
    rhs: float
    rhs_err: float
    status: str          # "pass" | "fail" | "inconclusive"
    margin: float
    sigma: float
    details: dict = field(default_factory=dict)


def _classify(lhs, lhs_err, rhs, rhs_err):
    """Three-state verdict for lhs <= rhs: fail only beyond 4 sigma."""
    margin = rhs - lhs
    sigma = float(np.hypot(lhs_err, rhs_err))
    if margin < -4.0 * sigma:
        status = "fail"
    elif margin > 2.0 * sigma:
        status = "pass"
    elif margin >= 0.0:
        status = "pass"
    else:
        status = "inconclusive"
    return status, margin, sigma


def _dirichlet_samples(L, d, pot, xi, n_samples, stride, seed, burn_A=4.0):
    cfg = dyn.SamplerConfig(L=L, d=d, pot=pot, xi=xi, n_samples=n_samples,
                            stride=stride, seed=seed, burn_A=burn_A)
    return dyn.sample_equilibrium(cfg)


def weighted_green_matrix(L: int, d: int) -> np.ndarray:
    """Dense inverse of div*(w grad) on the interior (the quadratic form
    of the Hamiltonian at unit stiffness); the Green kernel entering the
    Brascamp-Lieb bounds."""
    cube = lattice.centered_cube(L, d)
    return exact_gaussian.dirichlet_covariance(cube)


def brascamp_lieb_check(observable: FieldObservable, L: int, d: int,
                        pot: Potential, xi=None, n_samples: int = 400,
                        stride: int = 20, seed: int = 0,
                        green: np.ndarray | None = None,
                        burn_A: float = 4.0) -> InequalityReport:
    """Var[F] <= (1/lambda) <dF, G_w dF> with G_w the Green matrix of the
    Hamiltonian's quadratic form (equality for linear F, quadratic V)."""
    if green is None:
        green = weighted_green_matrix(L, d)
    cube = lattice.centered_cube(L, d)
    imask = lattice.interior_mask(cube)
    fvals, rvals = [], []
    for phi in _dirichlet_samples(L, d, pot, xi, n_samples, stride, seed,
                                  burn_A):
        fvals.append(float(observable.fn(phi)))
        g = np.asarray(observable.partials(phi))[imask]
        rvals.append(float(g @ green @ g) / pot.lam)
    lhs, lhs_err = variance_with_error(fvals)
    rhs, rhs_err = batch_means(rvals)
    status, margin, sigma = _classify(lhs, lhs_err, rhs, rhs_err)
    return InequalityReport(name=f"brascamp_lieb[{observable.name}]",
                            lhs=lhs, lhs_err=float(lhs_err),
                            rhs=rhs, rhs_err=rhs_err, status=status,
                            margin=margin, sigma=sigma,
                            details={"n_samples": n_samples})


def exp_moment_check(psi: np.ndarray, t_values, L: int, d: int,
                     pot: Potential, xi=None, n_samples: int = 400,
                     stride: int = 20, seed: int = 0,
                     green: np.ndarray | None = None) -> list:
    """log < exp(t sum psi (phi - <phi>)) > <= (t^2 / 2 lambda) psi.G psi
    for each t; effective-sample-size collapse is flagged."""
    if green is None:
        green = weighted_green_matrix(L, d)
    cube = lattice.centered_cube(L, d)
    imask = lattice.interior_mask(cube)
    psi = np.asarray(psi, dtype=float)
    g = psi[imask]
    quad = float(g @ green @ g)
    xs = np.array([float(np.sum(psi * phi)) for phi in
                   _dirichlet_samples(L, d, pot, xi, n_samples, stride,
                                      seed)])
    xs = xs - xs.mean()
    reports = []
    for t in t_values:
        w = np.exp(t * xs - np.max(t * xs))
        ess = float(w.sum() ** 2 / np.sum(w * w))
        lhs, lhs_err = jackknife(
            xs, lambda s: np.log(np.mean(np.exp(t * np.asarray(s)))))
        rhs = 0.5 * t * t * quad / pot.lam
        status, margin, sigma = _classify(lhs, lhs_err, rhs, 0.0)
        rep = InequalityReport(name=f"exp_moment[t={t}]", lhs=float(lhs),
                               lhs_err=float(lhs_err), rhs=rhs, rhs_err=0.0,
                               status=status, margin=margin, sigma=sigma,
                               details={"ess": ess})
        if ess < 0.1 * len(xs):
            rep.details["flag"] = "effective sample size collapse"
        reports.append(rep)
    return reports


def spectral_gap_check(observable: FieldObservable, L: int, d: int,
                       pot: Potential, xi=None, n_samples: int = 400,
                       stride: int = 20, seed: int = 0) -> InequalityReport:
    """Var[F] <= C L^2 sum_x <(dF(x))^2>; reports the fitted C."""
    cube = lattice.centered_cube(L, d)
    fvals, gvals = [], []
    for phi in _dirichlet_samples(L, d, pot, xi, n_samples, stride, seed):
        fvals.append(float(observable.fn(phi)))
        g = np.asarray(observable.partials(phi))
        gvals.append(float(np.sum(g * g)))
    lhs, lhs_err = variance_with_error(fvals)
    gmean, gerr = batch_means(gvals)
    raw = L ** 2 * gmean
    raw_err = L ** 2 * gerr
    fitted_C = lhs / raw if raw > 0 else np.inf
    status, margin, sigma = _classify(lhs, lhs_err, fitted_C * raw,
                                      fitted_C * raw_err)
    return InequalityReport(name=f"spectral_gap[{observable.name}]",
                            lhs=lhs, lhs_err=float(lhs_err),
                            rhs=raw, rhs_err=raw_err, status="pass"
                            if np.isfinite(fitted_C) else "inconclusive",
                            margin=margin, sigma=sigma,
                            details={"fitted_C": float(fitted_C)})


# ---------------------------------------------------------------------------
# multiscale Poincare (deterministic)


def _triadic_rhs(u: np.ndarray, m: int, d: int):
    """Gradient term and scale sum of the multiscale Poincare bound."""
    side = u.shape[0]
    grads = [np.diff(u, axis=i) for i in range(d)]
    all_g = np.concatenate([g.ravel() for g in grads])
    grad_term = float(np.sqrt(np.mean(all_g ** 2)))
    lo = -3 ** m
    scale_sum = 0.0
    for n in range(m):
        r = 3 ** n
        ys = np.arange(-(3 ** m // r) * r, 3 ** m + 1, r)
        ys = ys[(ys >= lo) & (ys <= 3 ** m)]
        acc = []
        for y in np.stack(np.meshgrid(*([ys] * d), indexing="ij"),
                          axis=-1).reshape(-1, d):
            # block y + [-r, r]^d clipped to the cube, in array indices
            sl = tuple(slice(max(y[i] - r - lo, 0),
                             min(y[i] + r - lo + 1, side))
                       for i in range(d))
            avg2 = 0.0
            for i in range(d):
                block = grads[i][tuple(
                    slice(sl[j].start,
                          max(sl[j].start, sl[j].stop - (1 if j == i else 0)))
                    for j in range(d))]
                if block.size:
                    avg2 += float(block.mean()) ** 2
            acc.append(avg2)
        scale_sum += r * float(np.sqrt(np.mean(acc)))
    return grad_term, scale_sum


def multiscale_poincare_check(m: int, d: int = 2, n_draws: int = 100,
                              n_calibrate: int = 200, seed: int = 0,
                              draw=None) -> InequalityReport:
    """Fit one global constant C on calibration draws, then verify
    ||u - (u)|| <= C (gradient term + scale sum) on fresh random u."""
    side = 2 * 3 ** m + 1
    rng = np.random.default_rng(seed)
    if draw is None:
        def draw(r):
            return r.standard_normal((side,) * d)

    def ratio(u):
        lhs = float(np.sqrt(np.mean((u - u.mean()) ** 2)))
        g, s = _triadic_rhs(u, m, d)
        return lhs, g + s

    cal = [ratio(draw(rng)) for _ in range(n_calibrate)]
    ratios = [l / r for l, r in cal if r > 0]
    # all-constant draws have rhs = lhs = 0; any C witnesses the inequality
    C = 1.5 * max(ratios) if ratios else 1.0
    n_pass = 0
    worst = 0.0
    for _ in range(n_draws):
        lhs, rhs = ratio(draw(rng))
        ok = lhs <= C * rhs
        n_pass += ok
        if rhs > 0:
            worst = max(worst, lhs / (C * rhs))
        elif lhs > 0:
            worst = np.inf
    status = "pass" if n_pass == n_draws else "fail"
    return InequalityReport(name=f"multiscale_poincare[m={m}]",
                            lhs=worst, lhs_err=0.0, rhs=1.0, rhs_err=0.0,
                            status=status, margin=1.0 - worst, sigma=0.0,
                            details={"C": float(C), "n_pass": int(n_pass),
                                     "n_draws": int(n_draws)})
