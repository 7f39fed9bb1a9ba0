"""Deterministic lattice linear algebra: Green functions, elliptic solves,
and parabolic time-stepping with (possibly time-dependent) edge
conductances.

Edge conductances are given per axis as arrays matching ``np.diff`` shapes
on the trailing d axes of the field; entries must vanish outside the edge
set E(Q) (edges with both endpoints on the boundary carry no flux).
Fields may carry leading batch axes; all operators act on the trailing d
axes and broadcast over the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lattice
from .exact_gaussian import weighted_laplacian, _interior_index


# ---------------------------------------------------------------------------
# discrete calculus on trailing axes

def grad(w: np.ndarray, d: int) -> list:
    nd = w.ndim
    return [np.diff(w, axis=nd - d + i) for i in range(d)]


def div_star(g: list, d: int) -> np.ndarray:
    """Adjoint gradient on trailing axes; edges beyond arrays contribute 0."""
    nd = g[0].ndim
    out = None
    for i, gi in enumerate(g):
        ax = nd - d + i
        s = list(gi.shape)
        s[ax] += 1
        if out is None:
            out = np.zeros(s, dtype=gi.dtype)
        lo = [slice(None)] * nd
        lo[ax] = slice(1, None)
        hi = [slice(None)] * nd
        hi[ax] = slice(0, -1)
        out[tuple(lo)] += gi
        out[tuple(hi)] -= gi
    return out


def interior_mask_nd(shape_d: tuple) -> np.ndarray:
    mask = np.zeros(shape_d, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape_d)] = True
    return mask


def constant_conductance(side: int, d: int, value: float,
                         edge_set_of: lattice.Cube | None = None) -> list:
    """Per-axis constant conductance arrays for a box of the given side,
    masked to the edge set of ``edge_set_of`` when provided."""
    out = []
    for i in range(d):
        shape = [side] * d
        shape[i] -= 1
        out.append(np.full(tuple(shape), float(value)))
    if edge_set_of is not None:
        masks = lattice.edge_set_masks(edge_set_of)
        out = [a * m for a, m in zip(out, masks)]
    return out


def mask_to_edge_set(a_edges: list, cube: lattice.Cube) -> list:
    masks = lattice.edge_set_masks(cube)
    return [a * m for a, m in zip(a_edges, masks)]


# ---------------------------------------------------------------------------
# Green functions


@dataclass
class GreenMatrix:
    """Lazily solved symmetric kernel G(x, y) on interior vertices.

    Columns are computed on demand by conjugate-gradient iteration to
    residual <= tol and cached; ``full()`` returns the dense kernel."""

    cube: lattice.Cube
    flavor: str               # "dirichlet" or "periodic_pinned"
    matrix: sp.spmatrix
    tol: float = 1e-10

    def __post_init__(self):
        self._cache = {}
        self._dense = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def column(self, j: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, j]
        if j not in self._cache:
            rhs = np.zeros(self.n)
            rhs[j] = 1.0
            x, info = spla.cg(self.matrix, rhs, rtol=0.0, atol=self.tol,
                              maxiter=20 * self.n)
            if info != 0:
                res = np.linalg.norm(self.matrix @ x - rhs)
                raise RuntimeError(
                    f"Green-function CG did not converge (residual {res:.3e})")
            self._cache[j] = x
        return self._cache[j]

    def value(self, i: int, j: int) -> float:
        return float(self.column(j)[i])

    def full(self) -> np.ndarray:
        if self._dense is None:
            self._dense = np.linalg.inv(self.matrix.toarray())
        return self._dense

    def residual(self, j: int) -> float:
        rhs = np.zeros(self.n)
        rhs[j] = 1.0
        return float(np.max(np.abs(self.matrix @ self.column(j) - rhs)))


def green_dirichlet(cube: lattice.Cube, weights=None,
                    tol: float = 1e-10) -> GreenMatrix:
    """Green function of div*(w grad) with zero Dirichlet boundary.

    ``weights=None`` gives the standard Dirichlet Laplacian (unit weight on
    every edge touching the interior); pass
    ``lattice.edge_interior_counts(cube)`` for the Hamiltonian's
    double-count quadratic form.
    """
    if weights is None:
        weights = [m.astype(float) for m in lattice.edge_set_masks(cube)]
    A = weighted_laplacian(cube, weights=weights)
    return GreenMatrix(cube=cube, flavor="dirichlet", matrix=A, tol=tol)


def torus_laplacian(n: int, d: int) -> sp.spmatrix:
    """Standard graph Laplacian of the n^d torus (all vertices)."""
    idx = np.arange(n ** d).reshape((n,) * d)
    rows, cols = [], []
    for i in range(d):
        rows.append(idx.ravel())
        cols.append(np.roll(idx, -1, axis=i).ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = -np.ones(len(r))
    off = sp.coo_matrix((data, (r, c)), shape=(n ** d, n ** d))
    A = off + off.T
    A = A + sp.diags(np.full(n ** d, 2.0 * d))
    return A.tocsr()


def green_periodic_pinned(L: int, d: int, tol: float = 1e-10) -> GreenMatrix:
    """Green function of the torus Laplacian on the 2L-torus with the
    pinned vertex (index 0) removed."""
    n = 2 * L
    A = torus_laplacian(n, d).tolil()
    keep = np.arange(1, n ** d)
    A = A[keep][:, keep].tocsr()
    cube = lattice.centered_cube(L, d)
    return GreenMatrix(cube=cube, flavor="periodic_pinned", matrix=A, tol=tol)


# ---------------------------------------------------------------------------
# parabolic stepping


def parabolic_cd_step(w: np.ndarray, a_edges: list, dt: float, d: int,
                      h_edges: list | None = None) -> np.ndarray:
    """One explicit step of d/dt w + div*(a grad w) = div* h with Dirichlet
    boundary: only interior vertices move, boundary values are preserved
    (callers keep them at zero)."""
    flux = [a * g for a, g in zip(a_edges, grad(w, d))]
    if h_edges is not None:
        flux = [f - h for f, h in zip(flux, h_edges)]
    upd = div_star(flux, d)
    mask = interior_mask_nd(w.shape[-d:])
    return w - dt * upd * mask


def parabolic_cn_step(w: np.ndarray, a_edges: list, dt: float, d: int,
                      h_edges: list | None = None) -> np.ndarray:
    """One explicit step of the zero-flux (Neumann) problem: the operator is
    the graph Laplacian over the supplied edges, every vertex moves, and
    total mass is conserved to roundoff when h = 0."""
    flux = [a * g for a, g in zip(a_edges, grad(w, d))]
    if h_edges is not None:
        flux = [f - h for f, h in zip(flux, h_edges)]
    return w - dt * div_star(flux, d)


def parabolic_step_implicit(w: np.ndarray, a_edges: list, dt: float, d: int,
                            boundary: str = "dirichlet",
                            tol: float = 1e-10) -> np.ndarray:
    """Backward-Euler step (I + dt A_a) w' = w, for stiff long-horizon
    decay studies; A_a applied matrix-free, solved by CG (unbatched)."""
    if w.ndim != d:
        raise ValueError("implicit stepping supports unbatched fields only")
    mask = interior_mask_nd(w.shape) if boundary == "dirichlet" else None

    def apply_op(v):
        v = v.reshape(w.shape)
        out = div_star([a * g for a, g in zip(a_edges, grad(v, d))], d)
        if mask is not None:
            out = out * mask
        return (v + dt * out).ravel()

    op = spla.LinearOperator((w.size, w.size), matvec=apply_op)
    x, info = spla.cg(op, w.ravel(), rtol=0.0, atol=tol * np.linalg.norm(w),
                      maxiter=10 * w.size)
    if info != 0:
        raise RuntimeError("implicit parabolic solve did not converge")
    return x.reshape(w.shape)


def parabolic_stability_dt(a_max: float, d: int) -> float:
    """Explicit stability bound for div*(a grad): dt < 2 / (4 d a_max)."""
    return 1.0 / (4.0 * d * a_max)


# ---------------------------------------------------------------------------
# decay envelope


def _l2sq(w: np.ndarray) -> float:
    return float(np.sum(np.square(w)))


def decay_envelope_check(L: int, d: int, f_edges: list, conductance_at,
                         horizon: float, dt: float,
                         source_at=None, n_records: int = 400):
    """Run the Cauchy-Dirichlet problem from w0 = div* f and test the
    envelope |w(t)|^2 <= C |f|^2 (1+t)^{-1} exp(-t/(C L^2)) plus the
    source convolution term, for the smallest constant C on a log grid.

    ``conductance_at(t)`` returns the per-axis conductance arrays at time
    t; ``source_at(t)`` optionally returns the per-axis edge source h(t).
    Returns a dict with the fitted C, the recorded curve, and a pass flag
    (C finite); the constant is fitted, never asserted.
    """
    cube = lattice.centered_cube(L, d)
    masks = lattice.edge_set_masks(cube)
    f_edges = [f * m for f, m in zip(f_edges, masks)]
    w = div_star(f_edges, d) * interior_mask_nd((2 * L + 1,) * d)
    f_sq = sum(_l2sq(f) for f in f_edges)

    n_steps = int(np.ceil(horizon / dt))
    record_every = max(1, n_steps // n_records)
    times, norms, h_sq = [0.0], [_l2sq(w)], [0.0]
    t = 0.0
    for k in range(n_steps):
        a = conductance_at(t)
        a = [ai * m for ai, m in zip(a, masks)]
        h = None
        if source_at is not None:
            h = [hi * m for hi, m in zip(source_at(t), masks)]
        w = parabolic_cd_step(w, a, dt, d, h)
        t += dt
        if (k + 1) % record_every == 0 or k == n_steps - 1:
            times.append(t)
            norms.append(_l2sq(w))
            h_sq.append(0.0 if h is None else sum(_l2sq(hi) for hi in h))

    times = np.asarray(times)
    norms = np.asarray(norms)
    h_sq = np.asarray(h_sq)

    def envelope(C):
        env = C * f_sq / (1.0 + times) * np.exp(-times / (C * L ** 2))
        if h_sq.any():
            # C * int_0^t |h(t-s)|^2 exp(-s/(C L^2)) ds on the record grid
            conv = np.zeros_like(times)
            for j in range(1, len(times)):
                s = times[j] - times[: j + 1]
                conv[j] = np.trapz(h_sq[: j + 1] * np.exp(-s / (C * L ** 2)),
                                   times[: j + 1])
            env = env + C * conv
        return env

    fitted_C = np.inf
    for C in np.logspace(-2, 6, 161):
        if np.all(norms <= envelope(C) + 1e-300):
            fitted_C = float(C)
            break
    return {"C": fitted_C, "passed": np.isfinite(fitted_C),
            "times": times, "norm_sq": norms, "f_sq": f_sq}


# ---------------------------------------------------------------------------
# parabolic Holder probe


def nash_holder_probe(w_records: list, times: list, K: int, d: int):
    """Oscillation-decay estimate of the parabolic Holder exponent.

    ``w_records[k]`` is the solution on the full box at ``times[k]``; the
    probe measures osc over the nested parabolic cylinders
    W_r = [t_end - r^2, t_end] x Q_r (Q_r centered in the box) for
    r = K, K/2, K/4, ... and fits log osc against log r.
    """
    t_end = times[-1]
    side = w_records[0].shape[-1]
    center = side // 2
    radii, oscs = [], []
    r = K
    while r >= 2:
        sel_t = [k for k, t in enumerate(times) if t >= t_end - r ** 2]
        lo, hi = center - r, center + r + 1
        block = np.stack([w_records[k][(slice(lo, hi),) * d] for k in sel_t])
        osc = float(block.max() - block.min())
        radii.append(r)
        oscs.append(osc)
        r //= 2
    radii = np.asarray(radii, dtype=float)
    oscs = np.asarray(oscs)
    pos = oscs > 0
    if pos.sum() >= 2:
        beta, logc = np.polyfit(np.log(radii[pos]), np.log(oscs[pos]), 1)
    else:
        beta, logc = 0.0, -np.inf
    return {"radii": radii, "oscillations": oscs, "beta": float(beta)}


# ---------------------------------------------------------------------------
# eigenvalue oracles


def dirichlet_eigenvalues(cube: lattice.Cube, weights=None, k: int = 6):
    A = weighted_laplacian(cube, weights=weights)
    if A.shape[0] <= 900:
        return np.linalg.eigvalsh(A.toarray())[:k]
    return np.sort(spla.eigsh(A, k=k, which="SA",
                              return_eigenvectors=False))


def neumann_graph_laplacian(cube: lattice.Cube, weights=None) -> sp.spmatrix:
    """Graph Laplacian over E(Q) on *all* vertices (zero-flux operator)."""
    if weights is None:
        weights = [m.astype(float) for m in lattice.edge_set_masks(cube)]
    n = cube.n_vertices
    idx = np.arange(n).reshape(cube.shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for i in range(cube.d):
        w = np.asarray(weights[i], dtype=float)
        t = lattice._tail_slice(idx, i).ravel()
        h = lattice._head_slice(idx, i).ravel()
        wv = w.ravel()
        np.add.at(diag, t, wv)
        np.add.at(diag, h, wv)
        rows.append(t)
        cols.append(h)
        vals.append(-wv)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    A = sp.coo_matrix((np.concatenate([v, v, diag]),
                       (np.concatenate([r, c, np.arange(n)]),
                        np.concatenate([c, r, np.arange(n)]))),
                      shape=(n, n)).tocsr()
    return A


def neumann_spectral_gap(cube: lattice.Cube, weights=None) -> float:
    """Second-smallest eigenvalue of the zero-flux operator restricted to
    the vertices actually touched by E(Q).  (Vertices all of whose edges
    are boundary-boundary, e.g. the corners, are decoupled degrees of
    freedom and are excluded.)"""
    A = neumann_graph_laplacian(cube, weights)
    deg = np.asarray(A.diagonal())
    keep = np.flatnonzero(deg > 0)
    A = A[keep][:, keep]
    if A.shape[0] <= 900:
        return float(np.linalg.eigvalsh(A.toarray())[1])
    vals = spla.eigsh(A, k=2, which="SA", return_eigenvectors=False)
    return float(np.sort(vals)[1])
