import numpy as np
import pytest

from snrom import build_mesh, interval_mesh, rectangle_mesh


class TestIntervalMesh:
    def test_two_segment_counts(self):
        mesh = interval_mesh([0.0, 1.0, 11.0], [0.01, 0.1])
        assert mesh.n_cells == 200
        np.testing.assert_allclose(mesh.hx[:100], 0.01, atol=1e-12)
        np.testing.assert_allclose(mesh.hx[100:], 0.1, atol=1e-12)
        assert mesh.x_edges[0] == 0.0 and mesh.x_edges[-1] == 11.0

    def test_cells_tile_without_overlap(self):
        mesh = interval_mesh([0.0, 2.0], [0.25])
        for c in range(mesh.n_cells - 1):
            assert mesh.cell_bounds(c)[1] == mesh.cell_bounds(c + 1)[0]

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            interval_mesh([0.0], [0.1])
        with pytest.raises(ValueError):
            interval_mesh([0.0, 1.0], [-0.1])
        with pytest.raises(ValueError):
            interval_mesh([1.0, 0.0], [0.1])
        with pytest.raises(ValueError):
            interval_mesh([0.0, 1.0], [0.3])  # not an integer multiple


class TestRectangleMesh:
    def test_counts_2x2(self):
        mesh = rectangle_mesh(2, 2, (0.0, 1.0, 0.0, 1.0))
        assert mesh.n_cells == 4
        assert sum(1 for _ in mesh.interior_faces()) == 4
        assert sum(1 for _ in mesh.boundary_faces()) == 8

    def test_counts_80x80(self):
        mesh = rectangle_mesh(80, 80, (-1.0, 1.0, -1.0, 1.0))
        assert mesh.n_cells == 6400

    def test_lexicographic_order(self):
        mesh = rectangle_mesh(3, 2, (0.0, 3.0, 0.0, 2.0))
        centers = mesh.cell_centers()
        # x index fastest within each row
        np.testing.assert_allclose(centers[0], [0.5, 0.5])
        np.testing.assert_allclose(centers[1], [1.5, 0.5])
        np.testing.assert_allclose(centers[3], [0.5, 1.5])

    def test_face_consistency(self):
        mesh = rectangle_mesh(3, 3, (0.0, 1.0, 0.0, 1.0))
        for minus, plus, axis, _ in mesh.interior_faces():
            bm = mesh.cell_bounds(minus)
            bp = mesh.cell_bounds(plus)
            if axis == 0:
                assert bm[1] == bp[0]  # shared x edge referenced from both sides
            else:
                assert bm[3] == bp[2]

    def test_face_arrays_match_iterators(self):
        mesh = rectangle_mesh(4, 3, (0.0, 1.0, 0.0, 1.0))
        listed = {(m, p, a) for m, p, a, _ in mesh.interior_faces()}
        from_arrays = set()
        for axis in range(2):
            minus, plus = mesh.interior_face_arrays(axis)
            from_arrays |= {(int(m), int(p), axis) for m, p in zip(minus, plus)}
        assert listed == from_arrays

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            rectangle_mesh(0, 2, (0.0, 1.0, 0.0, 1.0))
        with pytest.raises(ValueError):
            rectangle_mesh(2, 2, (0.0, 0.0, 0.0, 1.0))


def test_build_mesh_dispatch():
    mesh1 = build_mesh({"breakpoints": [0.0, 1.0, 11.0], "dx": [0.01, 0.1]})
    assert mesh1.dimension == 1 and mesh1.n_cells == 200
    mesh2 = build_mesh({"nx": 2, "ny": 2, "bounds": (0.0, 1.0, 0.0, 1.0)})
    assert mesh2.dimension == 2 and mesh2.n_cells == 4
    with pytest.raises(ValueError):
        build_mesh({"what": 1})
