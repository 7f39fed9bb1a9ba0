"""Helffer-Sjostrand machinery: dynamic conductances along Langevin
trajectories, the auxiliary random walk in the dynamic environment,
stochastic representations of the associated elliptic problems, and the
variance / homogenized-matrix estimators built on them.

The coefficient operator of the variance representation is the field
Hessian of the Hamiltonian, i.e. div*( w V''(grad phi - xi) grad ) with
the double-count edge weights w (uniformly 2 on the torus); the walk of
``effective_diffusivity`` jumps with the same weighted rates a = 2 V''
so that its diffusivity is the homogenized matrix of that operator.

Estimator exactness.  All scalar estimates here are of the form
< G, (-L_mu + div* a grad)^{-1} F > under the stationary measure.  They
are computed by drawing phi_0 from a stationary chain, forward-stepping
the frozen-trajectory parabolic equation from w(0) = F(., phi_0), and
accumulating integral dt of sum_x G(x, phi_t) w(t, x) -- the probe is
evaluated at the *current* field.  Along a fixed trajectory the forward
propagator and its adjoint differ (operators at different times do not
commute), but the stationary Langevin dynamics is reversible, so the two
orderings agree in law and the estimator is exact in expectation up to
time discretization and the (extrapolated, reported) time truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, lattice, solvers
from . import dynamics as dyn
from .potentials import Potential


def _block(phi: np.ndarray, anchor, side: int, d: int) -> np.ndarray:
    """Extract a contiguous side^d vertex block starting at ``anchor``,
    wrapping periodically where needed."""
    out = phi
    for i, a in enumerate(anchor):
        ax = out.ndim - d + i
        n = out.shape[ax]
        if a + side <= n:
            sl = [slice(None)] * out.ndim
            sl[ax] = slice(a, a + side)
            out = out[tuple(sl)]
        else:
            out = np.roll(out, -a, axis=ax)
            sl = [slice(None)] * out.ndim
            sl[ax] = slice(0, side)
            out = out[tuple(sl)]
    return out


@dataclass
class HSEstimate:
    value: object               # float or ndarray
    stderr: object
    n_samples: int
    T_max: float
    tail_fraction: float = 0.0
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# environments


def gaussian_torus_sample(n: int, d: int, c: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Exact sample of the pinned torus Gaussian with precision
    c div* grad (pin at the origin via global subtraction)."""
    eig = np.zeros((n,) * d)
    k = np.arange(n)
    for i in range(d):
        shape = [1] * d
        shape[i] = n
        eig = eig + 2.0 - 2.0 * np.cos(2 * np.pi * k / n).reshape(shape)
    eig = c * eig
    amp = np.zeros_like(eig)
    nz = eig > 1e-12
    amp[nz] = 1.0 / np.sqrt(eig[nz])
    z = rng.standard_normal((n,) * d)
    phi = np.fft.ifftn(np.fft.fftn(z) * amp).real
    phi = phi - phi[(0,) * d]
    return phi


class LangevinEnvironment:
    """A stationary Langevin chain exposing its field and conductances.

    Used as the random environment of every stochastic representation;
    the trapezoidal scheme keeps the stationary law unbiased."""

    def __init__(self, L: int, d: int, pot: Potential, xi=None,
                 bc: str = dyn.PERIODIC, dt: float | None = None,
                 seed: int = 0, burn_A: float = 1.0,
                 scheme: str = "trapezoidal",
                 convention: str = "hamiltonian",
                 init: str = "zero", burn_time: float | None = None):
        self.L, self.d, self.pot = L, d, pot
        self.xi = np.zeros(d) if xi is None else np.asarray(xi, dtype=float)
        self.bc = bc
        self.dt = dyn.default_dt(pot, d) if dt is None else dt
        self.rng = np.random.default_rng(seed)
        self.convention = convention
        self.scheme = scheme
        self.state = dyn.make_state(L, d, bc, self.xi)
        if init == "gaussian":
            # exact draw at the midpoint stiffness; for quadratic V this
            # *is* the stationary law, otherwise it cuts the burn-in to
            # relaxing the stiffness mismatch rather than building the
            # field from zero
            c0 = 0.5 * (pot.lam + pot.Lam)
            self.state.phi = gaussian_torus_sample(
                2 * L if bc == dyn.PERIODIC else 2 * L + 1, d,
                2.0 * c0 if convention == "hamiltonian" else c0, self.rng) \
                if bc == dyn.PERIODIC else self.state.phi
        elif init != "zero":
            raise ValueError(f"unknown init {init!r}")
        self._stepper = None
        if scheme == "trapezoidal":
            self._stepper = dyn.TrapezoidalStepper(
                L, d, bc, self.xi, pot, self.dt, convention)
        self._weights = dyn._hamiltonian_weights(L, d) \
            if (bc == dyn.DIRICHLET and convention == "hamiltonian") else None
        if burn_time is None:
            burn_time = burn_A * L ** 2 * np.log(max(L, 2))
        self.advance(int(np.ceil(burn_time / self.dt)))

    @property
    def phi(self) -> np.ndarray:
        return self.state.phi

    def advance(self, n_steps: int):
        for _ in range(n_steps):
            noise = self.rng.standard_normal(self.state.phi.shape)
            if self._stepper is not None:
                self.state.phi = self._stepper.step(self.state.phi, noise)
            else:
                self.state = dyn.step(self.state, self.dt, noise, self.pot,
                                      self.convention, self._weights)

    def conductance(self, weight: float | None = None) -> list:
        """Per-axis coefficient arrays w(e) V''(grad phi(e) - xi_i).

        Periodic: torus edge arrays (full shape, wraparound), weight 2.
        Dirichlet: diff-shaped arrays with the interior-endpoint weights.
        """
        phi = self.state.phi
        if self.bc == dyn.PERIODIC:
            wfac = 2.0 if weight is None else weight
            return [wfac * self.pot.d2v(np.roll(phi, -1, axis=i) - phi
                                        - self.xi[i])
                    for i in range(self.d)]
        ws = self._weights
        out = []
        for i in range(self.d):
            a = self.pot.d2v(np.diff(phi, axis=i) - self.xi[i])
            a = a * (ws[i] if ws is not None else 1.0)
            out.append(a)
        return out

    def local_field(self, anchor, side: int) -> np.ndarray:
        """The ``side``-vertex block of the field anchored at ``anchor``
        (periodic environment: the block may wrap around the torus)."""
        return _block(self.state.phi, anchor, side, self.d)

    def local_conductance(self, anchor, side: int, edge_masks=None,
                          weight: float = 2.0) -> list:
        """Conductances on the edges of a subcube block."""
        phi = self.local_field(anchor, side)
        out = []
        for i in range(self.d):
            a = weight * self.pot.d2v(np.diff(phi, axis=i) - self.xi[i])
            if edge_masks is not None:
                a = a * edge_masks[i]
            out.append(a)
        return out


# ---------------------------------------------------------------------------
# time integration of frozen-trajectory parabolic problems


def _tail_extrapolate(times, q, integral):
    """Fit an exponential to the tail of |q| and return (tail, flag)."""
    times = np.asarray(times)
    q = np.asarray(q)
    k = max(4, len(q) // 4)
    tq, qq = times[-k:], q[-k:]
    s = np.sign(qq[np.argmax(np.abs(qq))])
    if s == 0 or np.any(np.sign(qq[np.abs(qq) > 0]) != s):
        return 0.0, ["tail sign not settled; no extrapolation"]
    y = np.log(np.abs(qq) + 1e-300)
    slope, _ = np.polyfit(tq, y, 1)
    if slope >= -1e-12:
        return 0.0, ["tail not decaying; truncation unquantified"]
    tail = s * np.abs(qq[-1]) / (-slope)
    return float(tail), []


def integrate_pairing(env: LangevinEnvironment, w0: np.ndarray,
                      probe_fn, T_max: float, boundary: str,
                      anchor=None, side: int | None = None,
                      edge_masks=None, conductance_weight: float = 2.0,
                      record_stride: int = 4):
    """Integral over t of sum_x probe(t, x) w(t, x), with w stepped by the
    frozen-trajectory parabolic equation in lockstep with the environment.

    ``w0`` may carry leading batch axes (several sources at once).
    ``probe_fn(phi_local, a_edges)`` returns probe arrays broadcastable
    against w; the summed pairing is returned per (probe, source) pair.
    The environment chain is advanced as a side effect.
    """
    d = env.d
    dt = env.dt
    n_steps = int(np.ceil(T_max / dt))
    mask = None
    if boundary == "dirichlet":
        mask = solvers.interior_mask_nd(w0.shape[-d:])
        w = w0 * mask
    else:
        w = w0.copy()

    def local_a():
        if anchor is None:
            return env.conductance()
        return env.local_conductance(anchor, side, edge_masks,
                                     conductance_weight)

    def pair(wcur):
        a = local_a()
        phi_loc = env.phi if anchor is None \
            else env.local_field(anchor, side)
        p = probe_fn(phi_loc, a)
        # sum over the trailing d (lattice) axes
        axes = tuple(range(-d, 0))
        return np.sum(p * wcur, axis=axes), a

    # Left rectangle rule: for the explicit flow w_{k+1} = (1 - dt A) w_k
    # with frozen A, sum_k dt w_k = A^{-1} w_0 exactly, so the quadrature
    # and flow discretization errors cancel (exact for quadratic V).
    q0, a = pair(w)
    integral = dt * np.asarray(q0, dtype=float)
    rec_t, rec_q = [0.0], [np.asarray(q0, dtype=float)]
    for k in range(n_steps):
        if boundary == "dirichlet":
            w = solvers.parabolic_cd_step(w, a, dt, d)
        else:
            w = solvers.parabolic_cn_step(w, a, dt, d)
        env.advance(1)
        q_cur, a = pair(w)
        if k < n_steps - 1:
            integral += dt * np.asarray(q_cur)
        if (k + 1) % record_stride == 0:
            rec_t.append((k + 1) * dt)
            rec_q.append(np.asarray(q_cur, dtype=float))
    return integral, np.asarray(rec_t), np.stack(rec_q)


def _apply_tail(integral, rec_t, rec_q):
    """Tail-extrapolate each scalar component of the pairing record."""
    integral = np.asarray(integral, dtype=float)
    flat_i = integral.reshape(-1)
    flat_q = rec_q.reshape(len(rec_t), -1)
    tails = np.zeros_like(flat_i)
    flags = []
    for j in range(flat_i.size):
        tail, fl = _tail_extrapolate(rec_t, flat_q[:, j], flat_i[j])
        tails[j] = tail
        flags += fl
    total = flat_i + tails
    denom = np.maximum(np.abs(total), 1e-300)
    tail_fraction = float(np.max(np.abs(tails) / denom))
    return total.reshape(integral.shape), tail_fraction, flags


# ---------------------------------------------------------------------------
# stochastic representations (per-vertex estimates)


def hs_dirichlet_estimate(source_fn, L: int, d: int, pot: Potential,
                          xi=None, n_samples: int = 20,
                          T_max: float | None = None, seed: int = 0,
                          burn_A: float = 1.0, decorrelate: float = 4.0,
                          tail_tol: float = 0.05) -> HSEstimate:
    """Per-vertex estimate of the solution v(x, phi) of the HS Dirichlet
    problem on Q_L with vertex source f(x, phi) = ``source_fn(phi)``.

    v(x, phi0) is estimated as the time integral of the frozen-trajectory
    parabolic solution started from f(., phi0); the reported array is the
    average over sampled stationary fields phi0.
    """
    env = LangevinEnvironment(L, d, pot, xi, bc=dyn.DIRICHLET, seed=seed,
                              burn_A=burn_A)
    if T_max is None:
        T_max = 4.0 * L ** 2 * np.log(max(L, 2))
    dt = env.dt
    gap_steps = int(np.ceil(decorrelate / dt))
    mask = solvers.interior_mask_nd((2 * L + 1,) * d)
    vals = []
    tail_fracs = []
    flags = []
    for _ in range(n_samples):
        w = np.asarray(source_fn(env.phi), dtype=float) * mask
        v = np.zeros_like(w)
        n_steps = int(np.ceil(T_max / dt))
        a = env.conductance()
        for k in range(n_steps):
            v += dt * w          # left rule: exact for frozen coefficients
            w = solvers.parabolic_cd_step(w, a, dt, d)
            env.advance(1)
            a = env.conductance()
        tail = float(np.sqrt(np.sum(w * w)) * T_max)
        scale = float(np.max(np.abs(v)) + 1e-300)
        tail_fracs.append(min(1.0, tail / scale) if scale > 0 else 0.0)
        vals.append(v)
        env.advance(gap_steps)
    vals = np.stack(vals)
    value = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n_samples) \
        if n_samples > 1 else np.zeros_like(value)
    tf = float(np.mean(tail_fracs))
    if tf > tail_tol:
        flags.append(f"truncation tail fraction {tf:.3g} exceeds {tail_tol}")
    return HSEstimate(value=value, stderr=stderr, n_samples=n_samples,
                      T_max=T_max, tail_fraction=tf, flags=flags)


def hs_neumann_estimate(f_edges, q, L: int, d: int, pot: Potential,
                        xi=None, n_samples: int = 20,
                        T_max: float | None = None, seed: int = 0,
                        burn_A: float = 1.0, decorrelate: float = 4.0,
                        tail_tol: float = 0.05) -> HSEstimate:
    """Per-vertex estimate of the Neumann problem with edge source
    ``f_edges`` (per-axis arrays or a callable of phi) and boundary flux
    grad l_q, imposed at all times: the combined edge datum f + grad l_q
    enters as the fixed vertex source div*_Q(f + grad l_q).  The estimate
    is re-centered to spatial mean zero over the active vertices."""
    q = np.zeros(d) if q is None else np.asarray(q, dtype=float)
    env = LangevinEnvironment(L, d, pot, xi, bc=dyn.DIRICHLET, seed=seed,
                              burn_A=burn_A)
    if T_max is None:
        T_max = 4.0 * L ** 2 * np.log(max(L, 2))
    dt = env.dt
    cube = lattice.centered_cube(L, d)
    masks = lattice.edge_set_masks(cube)
    # vertices incident to at least one E(Q) edge (corners are inactive)
    active = np.zeros(cube.shape, dtype=bool)
    for i in range(d):
        sl_lo = [slice(None)] * d
        sl_lo[i] = slice(0, -1)
        sl_hi = [slice(None)] * d
        sl_hi[i] = slice(1, None)
        active[tuple(sl_lo)] |= masks[i]
        active[tuple(sl_hi)] |= masks[i]

    def source_vertex(phi):
        if callable(f_edges):
            fe = f_edges(phi)
        elif f_edges is None:
            fe = [np.zeros_like(m, dtype=float) for m in masks]
        else:
            fe = f_edges
        tot = [(fi + qi) * m for fi, qi, m in zip(fe, q, masks)]
        return solvers.div_star(tot, d)

    gap_steps = int(np.ceil(decorrelate / dt))
    vals, tail_fracs, flags = [], [], []
    for _ in range(n_samples):
        w = source_vertex(env.phi)
        v = np.zeros_like(w)
        n_steps = int(np.ceil(T_max / dt))
        a = env.conductance()
        a = [ai * m for ai, m in zip(a, masks)]
        for k in range(n_steps):
            v += dt * w          # left rule: exact for frozen coefficients
            w = solvers.parabolic_cn_step(w, a, dt, d)
            env.advance(1)
            a = [ai * m for ai, m in zip(env.conductance(), masks)]
        w_centered = w - w[active].mean()
        tail = float(np.sqrt(np.sum(w_centered ** 2)) * T_max)
        v = v - v[active].mean()
        v[~active] = 0.0
        scale = float(np.max(np.abs(v)) + 1e-300)
        tail_fracs.append(min(1.0, tail / scale) if scale > 0 else 0.0)
        vals.append(v)
        env.advance(gap_steps)
    vals = np.stack(vals)
    value = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n_samples) \
        if n_samples > 1 else np.zeros_like(value)
    tf = float(np.mean(tail_fracs))
    if tf > tail_tol:
        flags.append(f"truncation tail fraction {tf:.3g} exceeds {tail_tol}")
    return HSEstimate(value=value, stderr=stderr, n_samples=n_samples,
                      T_max=T_max, tail_fraction=tf, flags=flags)


# ---------------------------------------------------------------------------
# variance via the HS representation


def variance_via_hs(observable, L: int, d: int, pot: Potential, xi=None,
                    n_samples: int = 60, T_max: float | None = None,
                    seed: int = 0, burn_A: float = 1.0,
                    decorrelate: float = 6.0) -> HSEstimate:
    """Var[F] = sum_x < dF(x, .) u(x, .) > by the stochastic representation;
    ``observable`` provides ``partials(phi)`` (an array like phi, zero on
    the boundary).  Exact in expectation at stationarity (see module doc)."""
    env = LangevinEnvironment(L, d, pot, xi, bc=dyn.DIRICHLET, seed=seed,
                              burn_A=burn_A)
    if T_max is None:
        T_max = max(8.0, 2.0 * L ** 2 / pot.lam)
    gap_steps = int(np.ceil(decorrelate / env.dt))
    vals = []
    tail_fracs = []
    for _ in range(n_samples):
        w0 = np.asarray(observable.partials(env.phi), dtype=float)
        integral, rec_t, rec_q = integrate_pairing(
            env, w0,
            probe_fn=lambda phi, a: observable.partials(phi),
            T_max=T_max, boundary="dirichlet")
        total, tf, _ = _apply_tail(integral, rec_t, rec_q)
        vals.append(float(total))
        tail_fracs.append(tf)
        env.advance(gap_steps)
    vals = np.asarray(vals)
    return HSEstimate(value=float(vals.mean()),
                      stderr=float(vals.std(ddof=1) / np.sqrt(len(vals))),
                      n_samples=n_samples, T_max=T_max,
                      tail_fraction=float(np.mean(tail_fracs)))


# ---------------------------------------------------------------------------
# homogenized matrices on torus-embedded cubes


def _cube_edge_geometry(side: int, d: int):
    """Edge masks of E(Q) and per-direction edge counts for a box of the
    given side (local cornered-style conventions)."""
    Lc = side - 1
    cube = lattice.Cube(Lc, d, lattice.CORNERED)
    masks = lattice.edge_set_masks(cube)
    per_dir = Lc * (Lc - 1) ** (d - 1)
    return masks, float(per_dir)


def _group_state(env, anchors, side, kind, a0=None):
    """Per-group precomputation for the homogenized-matrix estimators."""
    d = env.d
    masks, per_dir = _cube_edge_geometry(side, d)
    state = {"anchors": anchors, "side": side, "masks": masks,
             "per_dir": per_dir, "n_sub": len(anchors), "kind": kind}
    if kind == "neumann":
        import scipy.sparse.linalg as spla
        h = []
        for i in range(d):
            g = [m.astype(float) if j == i else np.zeros_like(m, dtype=float)
                 for j, m in enumerate(masks)]
            h.append(solvers.div_star(g, d))
        state["h"] = np.stack(h)
        # control variate: exact Neumann solve at the constant reference
        # conductance a0; the parabolic run only estimates the
        # fluctuation correction (exactly zero for quadratic V)
        cube = lattice.Cube(side - 1, d, lattice.CORNERED)
        A = solvers.neumann_graph_laplacian(
            cube, weights=[m.astype(float) for m in masks]).tocsr()
        deg = np.asarray(A.diagonal()) > 0
        u0 = np.zeros((d,) + (side,) * d)
        for i in range(d):
            rhs = state["h"][i].ravel() / a0
            sol, info = spla.cg(A, rhs, rtol=1e-10, atol=0.0,
                                maxiter=40 * side * side)
            if info != 0:
                raise RuntimeError("reference Neumann solve failed")
            sol -= sol[deg].mean()
            sol[~deg] = 0.0
            u0[i] = sol.reshape((side,) * d)
        state["u0"] = u0
        lat = tuple(range(1, d + 1))
        state["pairing0"] = np.tensordot(state["h"], u0,
                                         axes=(lat, lat)) / per_dir
        state["a0"] = a0
    else:
        state["imask"] = solvers.interior_mask_nd((side,) * d)
    return state


def _source_probe(env, st):
    """Per-subcube conductances and (for Dirichlet) the probe/source
    arrays G_i = div*(a grad l_{e_i}) restricted to the interior."""
    d = env.d
    a_list, p_list = [], []
    for anc in st["anchors"]:
        a = env.local_conductance(anc, st["side"], edge_masks=st["masks"])
        a_list.append(a)
        if st["kind"] == "dirichlet":
            p = []
            for i in range(d):
                g = [np.zeros_like(ai) for ai in a]
                g[i] = a[i]
                p.append(solvers.div_star(g, d) * st["imask"])
            p_list.append(np.stack(p))
        else:
            p_list.append(st["h"])
    return a_list, p_list


def homogenized_matrices(env: LangevinEnvironment, groups, T_max: float,
                         n_samples: int, kind: str = "dirichlet",
                         decorrelate: float = 6.0) -> list:
    """Homogenized matrices on torus-embedded cubes, several cube groups
    lockstepped in one common environment (variance reduction for their
    differences).  ``groups`` is a list of (anchors, side) pairs; each
    group's value is averaged over its translates.

    kind="dirichlet": abar(Q) with entries
        delta_ij <sum_{i-edges} a>/|Q| - corrector pairing/|Q|,
    the Dirichlet variational problem's effective matrix (equals 2c Id
    exactly for quadratic(c), where the corrector source vanishes).

    kind="neumann": the inverse dual matrix astar(Q)^{-1} with entries
        <h_i, u_j>/|Q|,  h_i = div*_Q(grad l_{e_i}),
    u_j the Neumann solution paired against the deterministic sources.
    Decomposed as u_j = u0_j + u1_j where u0_j solves the exact
    constant-coefficient reference problem at a0 = mean conductance and
    u1_j carries the fluctuation part (source -div*(delta_a grad u0_j)),
    so the time truncation only touches a term of size O(delta_a).

    Returns one HSEstimate per group (value, per-sample stderr).
    """
    d = env.d
    dt = env.dt
    n_steps = int(np.ceil(T_max / dt))
    a0 = None
    if kind == "neumann":
        a0 = float(np.mean([ai.mean() for ai in env.conductance()]))
    states = [_group_state(env, anchors, side, kind, a0)
              for anchors, side in groups]
    lat_axes = tuple(range(1, d + 1))
    per_group_samples = [[] for _ in groups]
    per_group_tails = [[] for _ in groups]
    for _ in range(n_samples):
        firsts, ws, integrals = [], [], []
        for st in states:
            a_list, p_list = _source_probe(env, st)
            first = np.zeros((d, d))
            if kind == "dirichlet":
                for a in a_list:
                    for i in range(d):
                        first[i, i] += a[i].sum() / st["per_dir"] \
                            / st["n_sub"]
                w = np.stack(p_list)        # sources = probes at t=0
            else:
                first = st["pairing0"].copy()
                w = np.zeros((st["n_sub"], d) + (st["side"],) * d)
                for s, a in enumerate(a_list):
                    for j in range(d):
                        # delta_a grad u0 on E(Q) edges only
                        flux = [(a[ax] - st["a0"] * st["masks"][ax])
                                * np.diff(st["u0"][j], axis=ax)
                                * st["masks"][ax] for ax in range(d)]
                        w[s, j] = -solvers.div_star(flux, d)
            firsts.append(first)
            ws.append(w)
            integrals.append(np.zeros((st["n_sub"], d, d)))

        def pair_all():
            a_all, q_all = [], []
            for g, st in enumerate(states):
                a_list, p_list = _source_probe(env, st)
                q = np.stack([np.tensordot(p_list[s], ws[g][s],
                                           axes=(lat_axes, lat_axes))
                              for s in range(st["n_sub"])])
                a_all.append(a_list)
                q_all.append(q)
            return a_all, q_all

        a_all, q_all = pair_all()
        rec_t = [0.0]
        rec_q = [[q.copy()] for q in q_all]
        for k in range(n_steps):
            for g, st in enumerate(states):
                integrals[g] += dt * q_all[g]   # left rule (exact for
                #                                 frozen coefficients)
                step = solvers.parabolic_cd_step if kind == "dirichlet" \
                    else solvers.parabolic_cn_step
                for s in range(st["n_sub"]):
                    ws[g][s] = step(ws[g][s], a_all[g][s], dt, d)
            env.advance(1)
            a_all, q_all = pair_all()
            if (k + 1) % 4 == 0:
                rec_t.append((k + 1) * dt)
                for g in range(len(states)):
                    rec_q[g].append(q_all[g].copy())
        for g, st in enumerate(states):
            total, tf, _ = _apply_tail(integrals[g], np.asarray(rec_t),
                                       np.stack(rec_q[g]))
            paired = total.mean(axis=0) / st["per_dir"]
            if kind == "dirichlet":
                per_group_samples[g].append(firsts[g] - paired)
            else:
                per_group_samples[g].append(firsts[g] + paired)
            per_group_tails[g].append(tf)
        env.advance(int(np.ceil(decorrelate / env.dt)))
    out = []
    for g in range(len(groups)):
        samples = np.stack(per_group_samples[g])
        value = samples.mean(axis=0)
        value = 0.5 * (value + value.T)
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n_samples) \
            if n_samples > 1 else np.zeros_like(value)
        out.append(HSEstimate(value=value, stderr=stderr,
                              n_samples=n_samples, T_max=T_max,
                              tail_fraction=float(
                                  np.mean(per_group_tails[g])),
                              meta={"samples": samples}))
    return out


def ahom_dirichlet_hs(env: LangevinEnvironment, anchors, side: int,
                      T_max: float, n_samples: int,
                      decorrelate: float = 6.0) -> HSEstimate:
    """abar(Q) on one cube group; see :func:`homogenized_matrices`."""
    return homogenized_matrices(env, [(anchors, side)], T_max, n_samples,
                                "dirichlet", decorrelate)[0]


def astar_inv_neumann_hs(env: LangevinEnvironment, anchors, side: int,
                         T_max: float, n_samples: int,
                         decorrelate: float = 6.0) -> HSEstimate:
    """astar(Q)^{-1} on one cube group; see :func:`homogenized_matrices`."""
    return homogenized_matrices(env, [(anchors, side)], T_max, n_samples,
                                "neumann", decorrelate)[0]


# ---------------------------------------------------------------------------
# random walk in the dynamic environment


@dataclass
class DynamicConductance:
    """Recorded per-axis conductance snapshots on a torus, held
    piecewise-constant between snapshot times (jump rates a = V'')."""

    times: np.ndarray            # snapshot start times, increasing
    snaps: list                  # list of per-axis full-shape arrays
    lam: float
    Lam: float

    def at(self, t: float) -> list:
        if t < self.times[0] - 1e-12 or t > self.horizon + 1e-9:
            raise ValueError("time outside recorded horizon")
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = max(0, min(k, len(self.snaps) - 1))
        return self.snaps[k]

    @property
    def horizon(self) -> float:
        dt_snap = self.times[1] - self.times[0] if len(self.times) > 1 else 0.0
        return float(self.times[-1] + dt_snap)


def dynamic_conductance(env: LangevinEnvironment, horizon: float,
                        snap_dt: float,
                        weight: float = 1.0) -> DynamicConductance:
    """Record a(t, e) = weight * V''(grad phi_t(e) - xi) along the chain
    (periodic environment); the chain is advanced past ``horizon``.

    ``weight=2`` gives the rates of the double-count Hamiltonian
    convention (the curvature of the sampled energy along torus edges),
    the matched time scale for the walk whose diffusivity is the
    homogenized matrix."""
    if env.bc != dyn.PERIODIC:
        raise ValueError("walk environments are periodic")
    steps_per_snap = max(1, int(round(snap_dt / env.dt)))
    n_snap = int(np.ceil(horizon / (steps_per_snap * env.dt))) + 1
    times, snaps = [], []
    t = 0.0
    for k in range(n_snap):
        phi = env.phi
        snaps.append([weight * env.pot.d2v(np.roll(phi, -1, axis=i) - phi
                                           - env.xi[i])
                      for i in range(env.d)])
        times.append(t)
        env.advance(steps_per_snap)
        t += steps_per_snap * env.dt
    return DynamicConductance(times=np.asarray(times), snaps=snaps,
                              lam=weight * env.pot.lam,
                              Lam=weight * env.pot.Lam)


def simulate_walk(cond: DynamicConductance, start, horizon: float,
                  rng: np.random.Generator, record_times=None):
    """Continuous-time walk by thinning: propose at rate 2 d Lambda, pick
    one of the 2d incident directed edges uniformly, accept with
    probability a(t, e)/Lambda.  Returns the (unwrapped) displacement at
    the requested record times (default: only the horizon)."""
    d = cond.snaps[0][0].ndim
    n = cond.snaps[0][0].shape[0]
    Lam = cond.Lam
    rate = 2.0 * d * Lam
    pos = np.array(start, dtype=int)        # unwrapped
    if record_times is None:
        record_times = [horizon]
    record_times = list(record_times)
    out = np.zeros((len(record_times), d), dtype=int)
    n_events = rng.poisson(rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, size=n_events))
    dirs = rng.integers(0, 2 * d, size=n_events)
    accepts = rng.uniform(0.0, 1.0, size=n_events)
    snap_times = cond.times
    ri = 0
    for t, dr, u in zip(times, dirs, accepts):
        while ri < len(record_times) and record_times[ri] <= t:
            out[ri] = pos
            ri += 1
        axis, sign = dr % d, 1 if dr < d else -1
        k = int(np.searchsorted(snap_times, t, side="right") - 1)
        a_ax = cond.snaps[max(0, k)][axis]
        site = pos % n
        if sign > 0:
            idx = tuple(site)
        else:
            site2 = site.copy()
            site2[axis] = (site2[axis] - 1) % n
            idx = tuple(site2)
        if u < a_ax[idx] / Lam:
            pos = pos.copy()
            pos[axis] += sign
    while ri < len(record_times):
        out[ri] = pos
        ri += 1
    return out


def effective_diffusivity(pot: Potential, xi, L: int, d: int,
                          horizon: float = 400.0, n_env: int = 4,
                          n_walks: int = 64, seed: int = 0,
                          snap_dt: float = 0.5, burn_A: float = 1.0):
    """Effective diffusivity of the walk in the dynamic environment:
    slope of Cov(X_t)/(2t), with error bars over environments x walks and
    a linearity check of the mean-square displacement.

    The walk jumps with the weighted rates a = 2 V'' of the double-count
    Hamiltonian convention (matching the environment's own time scale),
    so the estimate converges to the homogenized matrix itself: 2c Id
    exactly for quadratic(c)."""
    rng = np.random.default_rng(seed)
    check_times = np.linspace(horizon / 4, horizon, 8)
    per_env = []
    msd_curves = []
    for e in range(n_env):
        env = LangevinEnvironment(L, d, pot, xi, bc=dyn.PERIODIC,
                                  seed=seed + 1000 + e, burn_A=burn_A)
        cond = dynamic_conductance(env, horizon, snap_dt, weight=2.0)
        disp = np.zeros((n_walks, len(check_times), d))
        for wk in range(n_walks):
            disp[wk] = simulate_walk(cond, (0,) * d, horizon, rng,
                                     record_times=check_times)
        per_env.append(disp)
        msd_curves.append((disp ** 2).sum(axis=2).mean(axis=0))
    disp = np.concatenate(per_env)           # (n_env*n_walks, times, d)
    xT = disp[:, -1, :]
    mat = (xT[:, :, None] * xT[:, None, :]).mean(axis=0) / (2 * horizon)
    nw = len(xT)

    def _stat(xs):
        return (xs[:, :, None] * xs[:, None, :]).mean(axis=0) \
            / (2 * horizon)

    # walk-level jackknife captures the walk noise with many degrees of
    # freedom; the spread of per-environment means adds the environment
    # noise but has only n_env - 1 dof, so take the elementwise max
    _, stderr = diagnostics.jackknife(xT, _stat, n_blocks=min(16, nw))
    if n_env > 1:
        env_mats = np.stack([
            (e[:, -1, :, None] * e[:, -1, None, :]).mean(axis=0)
            / (2 * horizon) for e in per_env])
        stderr = np.maximum(stderr,
                            env_mats.std(axis=0, ddof=1) / np.sqrt(n_env))
    msd = np.stack(msd_curves).mean(axis=0)
    slope_ratio = (msd[-1] / check_times[-1]) / \
        max(msd[0] / check_times[0], 1e-300)
    flags = []
    if not 0.7 < slope_ratio < 1.3:
        flags.append(f"MSD growth non-linear (ratio {slope_ratio:.3f})")
    return HSEstimate(value=0.5 * (mat + mat.T), stderr=stderr,
                      n_samples=nw, T_max=horizon, flags=flags,
                      meta={"check_times": check_times, "msd": msd})
