"""Lattice geometry and discrete vector calculus on boxes of Z^d.

Two box conventions are used throughout the package and are carried
explicitly by the ``flavor`` tag of a :class:`Cube`:

* ``centered``: [-L, L]^d with (2L+1)^d vertices, used for the Gibbs
  measures, the surface tension and the dynamics.
* ``cornered``: [0, L]^d, used for the edge-normalized subadditive
  quantities (their edge set E(Q) has exactly d*L*(L-1)^(d-1) elements).
* ``triadic``: the centered cube of side 2*3^m used for multiscale
  experiments; it is a centered cube with L = 3^m.

Fields on a cube are stored as numpy arrays of shape ``cube.shape`` with
index 0 corresponding to the lower corner.  Edge-indexed data is stored
as one array per axis: the axis-i array has the vertex shape with axis i
shortened by one, entry ``x`` referring to the directed edge
``(x, x + e_i)`` (tail in lexicographic order before head).  This fixed
layout is the canonical edge ordering used for all reproducible output.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

CENTERED = "centered"
CORNERED = "cornered"
TRIADIC = "triadic"


@dataclass(frozen=True)
class Cube:
    """An axis-aligned lattice box together with its convention tag."""

    L: int
    d: int
    flavor: str = CENTERED

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if self.L < 1:
            raise ValueError("side parameter must be >= 1")
        if self.flavor not in (CENTERED, CORNERED, TRIADIC):
            raise ValueError(f"unknown cube flavor {self.flavor!r}")

    @property
    def low(self) -> np.ndarray:
        if self.flavor == CORNERED:
            return np.zeros(self.d, dtype=int)
        return np.full(self.d, -self.L, dtype=int)

    @property
    def high(self) -> np.ndarray:
        return np.full(self.d, self.L, dtype=int)

    @property
    def side(self) -> int:
        """Number of vertices along each axis."""
        if self.flavor == CORNERED:
            return self.L + 1
        return 2 * self.L + 1

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def n_vertices(self) -> int:
        return self.side ** self.d

    @property
    def n_interior(self) -> int:
        return (self.side - 2) ** self.d


def centered_cube(L: int, d: int) -> Cube:
    return Cube(L, d, CENTERED)


def cornered_cube(L: int, d: int) -> Cube:
    return Cube(L, d, CORNERED)


def triadic_cube(m: int, d: int) -> Cube:
    """The centered cube of side 2*3^m."""
    if m < 0:
        raise ValueError("triadic scale must be >= 0")
    return Cube(3 ** m, d, TRIADIC)


# ---------------------------------------------------------------------------
# vertex structure


def interior_mask(cube: Cube) -> np.ndarray:
    """Boolean array marking vertices whose 2d neighbors all lie in the cube."""
    mask = np.zeros(cube.shape, dtype=bool)
    inner = tuple(slice(1, -1) for _ in range(cube.d))
    mask[inner] = True
    return mask


def boundary_mask(cube: Cube) -> np.ndarray:
    return ~interior_mask(cube)


def interior_vertices(cube: Cube) -> np.ndarray:
    """(n, d) array of interior vertex coordinates in lattice units."""
    idx = np.argwhere(interior_mask(cube))
    return idx + cube.low


def vertex_axes(cube: Cube) -> list:
    """Per-axis coordinate vectors (lattice units) for building fields."""
    lo = cube.low
    return [np.arange(lo[i], lo[i] + cube.side) for i in range(cube.d)]


def affine_field(p, cube: Cube) -> np.ndarray:
    """The affine field l_p(x) = p . x as a vertex array."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(cube.shape)
    for i in range(cube.d):
        shape = [1] * cube.d
        shape[i] = cube.side
        out = out + p[i] * vertex_axes(cube)[i].reshape(shape)
    return out


# ---------------------------------------------------------------------------
# edge structure

def edge_interior_counts(cube: Cube) -> list:
    """Per-axis arrays counting interior endpoints of each edge (0, 1 or 2).

    The edge set E(Q) consists exactly of the edges with a positive count
    (edges having both endpoints on the boundary are excluded).  The counts
    double as the multiplicities with which the Hamiltonian's vertex-indexed
    double sum visits each edge.
    """
    imask = interior_mask(cube).astype(np.int64)
    out = []
    for i in range(cube.d):
        tail = _tail_slice(imask, i)
        head = _head_slice(imask, i)
        out.append(tail + head)
    return out


def edge_set_masks(cube: Cube) -> list:
    """Per-axis boolean arrays for membership in E(Q)."""
    return [c > 0 for c in edge_interior_counts(cube)]


def boundary_edge_masks(cube: Cube) -> list:
    """Edges of E(Q) with exactly one endpoint on the boundary."""
    return [c == 1 for c in edge_interior_counts(cube)]


def edge_count(cube: Cube) -> int:
    return int(sum(m.sum() for m in edge_set_masks(cube)))


def edge_count_formula(d: int, L: int) -> int:
    """Closed form d*L*(L-1)^(d-1) for the edge set of a cornered cube."""
    return d * L * (L - 1) ** (d - 1)


def edge_list(cube: Cube):
    """Canonical (tails, heads, axes) arrays for E(Q), axis-major order."""
    tails, heads, axes = [], [], []
    for i, mask in enumerate(edge_set_masks(cube)):
        idx = np.argwhere(mask)
        t = idx + cube.low
        h = t.copy()
        h[:, i] += 1
        tails.append(t)
        heads.append(h)
        axes.append(np.full(len(idx), i, dtype=int))
    return np.concatenate(tails), np.concatenate(heads), np.concatenate(axes)


# ---------------------------------------------------------------------------
# discrete calculus

def _tail_slice(arr: np.ndarray, axis: int) -> np.ndarray:
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(0, -1)
    return arr[tuple(sl)]


def _head_slice(arr: np.ndarray, axis: int) -> np.ndarray:
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(1, None)
    return arr[tuple(sl)]


def gradient_arrays(phi: np.ndarray, d: int | None = None) -> list:
    """Per-axis edge arrays of the discrete gradient phi(head) - phi(tail)."""
    nd = phi.ndim if d is None else d
    return [np.diff(phi, axis=i) for i in range(nd)]


def gradient(phi: np.ndarray, cube: Cube, tail, axis: int) -> float:
    """Gradient of ``phi`` on the directed edge (tail, tail + e_axis)."""
    idx = tuple(np.asarray(tail, dtype=int) - cube.low)
    head = list(idx)
    head[axis] += 1
    if idx[axis] < 0 or head[axis] >= cube.side:
        raise ValueError("edge outside cube")
    return float(phi[tuple(head)] - phi[idx])


def divergence_star_arrays(g: list) -> np.ndarray:
    """Adjoint of the gradient: vertex array with sum over incoming minus
    outgoing edge values, edges outside the arrays contributing zero.

    Satisfies sum_e g(e) grad(phi)(e) = sum_x phi(x) div*(g)(x) for fields
    vanishing where the edge arrays end.
    """
    d = len(g)
    shape = None
    out = None
    for i, gi in enumerate(g):
        s = list(gi.shape)
        s[i] += 1
        if out is None:
            shape = tuple(s)
            out = np.zeros(shape)
        pad_lo = [slice(None)] * d
        pad_lo[i] = slice(1, None)
        pad_hi = [slice(None)] * d
        pad_hi[i] = slice(0, -1)
        out[tuple(pad_lo)] += gi
        out[tuple(pad_hi)] -= gi
    return out


def divergence_star(g: list, cube: Cube, vertex) -> float:
    """div* of per-axis edge arrays at one interior vertex."""
    idx = tuple(np.asarray(vertex, dtype=int) - cube.low)
    if not interior_mask(cube)[idx]:
        raise ValueError("divergence_star requires an interior vertex")
    return float(divergence_star_arrays(g)[idx])


def periodic_gradient_arrays(phi: np.ndarray) -> list:
    """Wraparound gradient on a torus: axis-i array has full vertex shape."""
    return [np.roll(phi, -1, axis=i) - phi for i in range(phi.ndim)]


def periodic_divergence_star_arrays(g: list) -> np.ndarray:
    out = np.zeros(g[0].shape)
    for i, gi in enumerate(g):
        out += np.roll(gi, 1, axis=i) - gi
    return out


# ---------------------------------------------------------------------------
# triadic structure

def triadic_partition(m: int, n: int, d: int) -> list:
    """Centers z of the translates z + triadic(n) whose union covers
    triadic(m) with disjoint interiors (3^(d(m-n)) subcubes)."""
    if not 0 <= n < m:
        raise ValueError("need 0 <= n < m")
    k = 3 ** (m - n)
    half = (k - 1) // 2
    spacing = 2 * 3 ** n
    offsets = [spacing * j for j in range(-half, half + 1)]
    return [tuple(z) for z in itertools.product(offsets, repeat=d)]


def subcube_vertex_slices(center, n: int, parent: Cube) -> tuple:
    """Index slices of the translate center + triadic(n) inside ``parent``."""
    r = 3 ** n
    lo = np.asarray(center, dtype=int) - r - parent.low
    if np.any(lo < 0) or np.any(lo + 2 * r + 1 > parent.side):
        raise ValueError("subcube not contained in parent")
    return tuple(slice(int(a), int(a) + 2 * r + 1) for a in lo)
