"""Dense linear-algebra references for the quadratic (Gaussian) case.

For V(t) = c t^2/2 the Gibbs measure is Gaussian, so every quantity the
samplers estimate has an exact value obtainable by a linear solve.  These
routines are the ground truth ("oracle mode") that calibrates the Monte
Carlo estimators and fixes sign/normalization conventions once and for all.

Conventions.  The Hamiltonian is the vertex-indexed double sum over
interior x and all neighbors y, which visits every edge once per interior
endpoint.  Equivalently it is an edge sum with weights w(e) in {1, 2}
(the values of :func:`gradphi.lattice.edge_interior_counts`), so the
Gaussian precision matrix restricted to interior vertices is
c * div*(w grad).  All per-site normalizations below use the vertex count
|Q_L| = (2L+1)^d of the centered cube.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lattice


def _interior_index(cube: lattice.Cube):
    mask = lattice.interior_mask(cube)
    idx = -np.ones(cube.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    return mask, idx


def weighted_laplacian(cube: lattice.Cube, weights=None, c: float = 1.0):
    """Sparse matrix of the quadratic form sum_e w(e) c (grad phi(e))^2
    over interior vertices (fields vanish on the boundary).

    ``weights`` defaults to the Hamiltonian multiplicities (2 on
    interior-interior edges, 1 on interior-boundary edges); pass unit
    weights on the edge set for the standard Dirichlet Laplacian.
    """
    if weights is None:
        weights = lattice.edge_interior_counts(cube)
    mask, idx = _interior_index(cube)
    n = int(mask.sum())
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for i in range(cube.d):
        w = np.asarray(weights[i], dtype=float)
        t_idx = lattice._tail_slice(idx, i)
        h_idx = lattice._head_slice(idx, i)
        t_in = t_idx >= 0
        h_in = h_idx >= 0
        # diagonal: each incident edge contributes w(e)
        np.add.at(diag, t_idx[t_in], w[t_in])
        np.add.at(diag, h_idx[h_in], w[h_in])
        both = t_in & h_in
        rows.append(t_idx[both])
        cols.append(h_idx[both])
        vals.append(-w[both])
    r = np.concatenate(rows)
    cq = np.concatenate(cols)
    v = np.concatenate(vals)
    A = sp.coo_matrix(
        (np.concatenate([v, v, diag]),
         (np.concatenate([r, cq, np.arange(n)]),
          np.concatenate([cq, r, np.arange(n)]))),
        shape=(n, n),
    ).tocsr()
    return c * A


def dirichlet_covariance(cube: lattice.Cube, c: float = 1.0,
                         weights=None) -> np.ndarray:
    """Exact covariance of the quadratic(c) Dirichlet field (dense inverse)."""
    A = weighted_laplacian(cube, weights=weights, c=c)
    return np.linalg.inv(A.toarray())


def tilt_coefficients(cube: lattice.Cube, c: float = 1.0) -> np.ndarray:
    """(d, n_interior) coefficient vectors b_i of phi in the tilted-energy
    cross term: the Hamiltonian at tilt xi equals H_0 - sum_i xi_i b_i.phi
    + c |Q_L^o| |xi|^2 for quadratic(c)."""
    counts = lattice.edge_interior_counts(cube)
    mask, idx = _interior_index(cube)
    n = int(mask.sum())
    b = np.zeros((cube.d, n))
    for i in range(cube.d):
        w = c * np.asarray(counts[i], dtype=float)
        t_idx = lattice._tail_slice(idx, i)
        h_idx = lattice._head_slice(idx, i)
        np.add.at(b[i], h_idx[h_idx >= 0], w[h_idx >= 0])
        np.subtract.at(b[i], t_idx[t_idx >= 0], w[t_idx >= 0])
    return b


def exact_sigma(L: int, d: int, c: float = 1.0, xi=None) -> float:
    """Exact surface tension sigma_L(xi) for quadratic(c)."""
    xi = np.zeros(d) if xi is None else np.asarray(xi, dtype=float)
    cube = lattice.centered_cube(L, d)
    A = weighted_laplacian(cube, c=c).toarray()
    b = xi @ tilt_coefficients(cube, c=c)
    K = c * cube.n_interior * float(xi @ xi)
    return (K - 0.5 * b @ np.linalg.solve(A, b)) / cube.n_vertices


def exact_grad_sigma(L: int, d: int, c: float = 1.0, xi=None) -> np.ndarray:
    xi = np.zeros(d) if xi is None else np.asarray(xi, dtype=float)
    cube = lattice.centered_cube(L, d)
    A = weighted_laplacian(cube, c=c).toarray()
    bmat = tilt_coefficients(cube, c=c)
    b = xi @ bmat
    sol = np.linalg.solve(A, b)
    return (2.0 * c * cube.n_interior * xi - bmat @ sol) / cube.n_vertices


def exact_hessian(L: int, d: int, c: float = 1.0) -> np.ndarray:
    """Exact Hessian of sigma_L for quadratic(c) (xi-independent).

    Equals 2c(|Q_L^o|/|Q_L|) Id minus a boundary covariance correction of
    order 1/L; the leading term alone is the bulk edge-density value.
    """
    cube = lattice.centered_cube(L, d)
    A = weighted_laplacian(cube, c=c).toarray()
    bmat = tilt_coefficients(cube, c=c)
    corr = bmat @ np.linalg.solve(A, bmat.T)
    return (2.0 * c * cube.n_interior * np.eye(d) - corr) / cube.n_vertices


def bulk_hessian(L: int, d: int, c: float = 1.0) -> np.ndarray:
    """The closed-form bulk value 2c(|Q_L^o|/|Q_L|) Id (no boundary term)."""
    cube = lattice.centered_cube(L, d)
    return 2.0 * c * (cube.n_interior / cube.n_vertices) * np.eye(d)


def torus_zero_mean_green(n: int, d: int, c: float = 1.0) -> np.ndarray:
    """Pseudo-inverse kernel g(x) of the torus operator 2c div* grad on
    mean-zero functions, as an n^d array (FFT diagonalization)."""
    k = [np.arange(n)] * d
    eig = np.zeros((n,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = n
        eig = eig + 2.0 - 2.0 * np.cos(2 * np.pi * k[i] / n).reshape(shape)
    eig = 2.0 * c * eig
    inv = np.zeros_like(eig)
    nz = eig > 1e-12
    inv[nz] = 1.0 / eig[nz]
    g = np.fft.ifftn(inv).real * 1.0
    return g


def torus_pinned_covariance_diag_of_gradients(n: int, d: int, c: float = 1.0):
    """Exact Var[grad phi(e)] per axis for the periodic-pinned quadratic(c)
    field on an n^d torus (same for every edge by translation invariance)."""
    g = torus_zero_mean_green(n, d, c)
    out = []
    for i in range(d):
        shift = [0] * d
        shift[i] = 1
        out.append(2.0 * (g[(0,) * d] - g[tuple(shift)]))
    return np.array(out)


def torus_pinned_field_variance(n: int, d: int, c: float = 1.0) -> np.ndarray:
    """Exact Var[phi(x)] for the pinned torus field (pin at the origin)."""
    g = torus_zero_mean_green(n, d, c)
    g0 = g[(0,) * d]
    return 2.0 * (g0 - g)


def smallest_dirichlet_eigenvalue(cube: lattice.Cube, c: float = 1.0,
                                  weights=None) -> float:
    """Smallest eigenvalue of c div*(w grad) with Dirichlet boundary."""
    A = weighted_laplacian(cube, weights=weights, c=c)
    if A.shape[0] <= 400:
        return float(np.linalg.eigvalsh(A.toarray())[0])
    val = spla.eigsh(A, k=1, which="SA", return_eigenvectors=False)
    return float(val[0])
