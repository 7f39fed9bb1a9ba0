import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradphi import lattice


class TestCube:
    def test_centered_geometry(self):
        cube = lattice.centered_cube(3, 2)
        assert cube.side == 7
        assert cube.n_vertices == 49
        assert cube.n_interior == 25
        assert tuple(cube.low) == (-3, -3)
        assert tuple(cube.high) == (3, 3)

    def test_cornered_geometry(self):
        cube = lattice.cornered_cube(4, 2)
        assert cube.side == 5
        assert tuple(cube.low) == (0, 0)

    def test_triadic_side(self):
        for m in (0, 1, 2):
            cube = lattice.triadic_cube(m, 2)
            assert cube.side == 2 * 3 ** m + 1

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            lattice.Cube(0, 2)
        with pytest.raises(ValueError):
            lattice.Cube(2, 1)
        with pytest.raises(ValueError):
            lattice.Cube(2, 2, "weird")


class TestMasksAndCounts:
    def test_interior_plus_boundary_partition(self):
        cube = lattice.centered_cube(3, 2)
        im = lattice.interior_mask(cube)
        bm = lattice.boundary_mask(cube)
        assert not np.any(im & bm)
        assert np.all(im | bm)
        assert im.sum() == cube.n_interior

    def test_edge_interior_counts_values(self):
        cube = lattice.centered_cube(2, 2)
        for counts in lattice.edge_interior_counts(cube):
            assert set(np.unique(counts)) <= {0, 1, 2}
        # the edge through the center has both endpoints interior
        c0 = lattice.edge_interior_counts(cube)[0]
        assert c0[2, 2] == 2

    def test_edge_count_matches_formula(self):
        for L in (2, 3, 5):
            for d in (2, 3):
                cube = lattice.cornered_cube(L, d)
                assert lattice.edge_count(cube) == \
                    lattice.edge_count_formula(d, L)

    @given(L=st.integers(1, 4), d=st.integers(2, 3))
    @settings(max_examples=20, deadline=None)
    def test_edge_masks_shapes(self, L, d):
        cube = lattice.centered_cube(L, d)
        masks = lattice.edge_set_masks(cube)
        assert len(masks) == d
        for i, m in enumerate(masks):
            expected = tuple(cube.side - (ax == i) for ax in range(d))
            assert m.shape == expected

    def test_edge_list_canonical(self):
        cube = lattice.cornered_cube(2, 2)
        tails, heads, axes = lattice.edge_list(cube)
        assert len(tails) == lattice.edge_count(cube)
        assert np.all(heads - tails == np.eye(2, dtype=int)[axes])


class TestDiscreteCalculus:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_divergence_star_is_gradient_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        phi = rng.standard_normal((5, 6))
        phi[0, :] = phi[-1, :] = phi[:, 0] = phi[:, -1] = 0.0
        g = [rng.standard_normal((4, 6)), rng.standard_normal((5, 5))]
        lhs = sum(float(np.sum(gi * dphi)) for gi, dphi in
                  zip(g, lattice.gradient_arrays(phi, 2)))
        rhs = float(np.sum(phi * lattice.divergence_star_arrays(g)))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_gradient_single_edge(self):
        cube = lattice.centered_cube(2, 2)
        phi = np.arange(25, dtype=float).reshape(5, 5)
        assert lattice.gradient(phi, cube, (-2, 0), 0) == 5.0
        assert lattice.gradient(phi, cube, (0, 0), 1) == 1.0

    def test_periodic_divergence_of_gradient_sums_to_zero(self):
        rng = np.random.default_rng(0)
        phi = rng.standard_normal((6, 6))
        g = lattice.periodic_gradient_arrays(phi)
        div = lattice.periodic_divergence_star_arrays(g)
        assert abs(div.sum()) < 1e-12

    def test_affine_field_has_constant_gradient(self):
        cube = lattice.centered_cube(3, 2)
        u = lattice.affine_field((1.5, -0.5), cube)
        g = lattice.gradient_arrays(u, 2)
        assert np.allclose(g[0], 1.5)
        assert np.allclose(g[1], -0.5)


class TestTriadic:
    def test_partition_covers_disjointly(self):
        m, n, d = 2, 1, 2
        parent = lattice.triadic_cube(m, d)
        centers = lattice.triadic_partition(m, n, d)
        assert len(centers) == 3 ** (d * (m - n))
        # interiors of edge sets are disjoint and vertex union covers parent
        cover = np.zeros(parent.shape, dtype=int)
        inner = np.zeros(parent.shape, dtype=int)
        for z in centers:
            sl = lattice.subcube_vertex_slices(z, n, parent)
            cover[sl] += 1
            inner[tuple(slice(s.start + 1, s.stop - 1) for s in sl)] += 1
        assert cover.min() >= 1
        assert inner.max() == 1

    def test_partition_rejects_bad_scales(self):
        with pytest.raises(ValueError):
            lattice.triadic_partition(1, 1, 2)

    def test_subcube_slices_must_fit(self):
        parent = lattice.triadic_cube(1, 2)
        with pytest.raises(ValueError):
            lattice.subcube_vertex_slices((100, 0), 0, parent)
