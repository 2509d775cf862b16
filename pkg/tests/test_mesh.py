import numpy as np
import pytest

from hydrograd.errors import (
    AmbiguousOutletError,
    CycleError,
    GaugeOffGridError,
    InvalidCodeError,
    ShapeMismatchError,
)
from hydrograd.mesh import D8_OFFSETS, GaugeSet, build_mesh, delineate
from hydrograd.twin import synthetic_flowdir

from conftest import FD_CHAIN_1X4, FD_STAR_3X3


def walk_drainage(flowdir):
    """Independent drainage oracle: follow every cell's path to its outlet."""
    nr, nc = flowdir.shape
    count = np.zeros((nr, nc), dtype=np.int64)
    for r0 in range(nr):
        for c0 in range(nc):
            r, c = r0, c0
            for _ in range(nr * nc + 1):
                count[r, c] += 1
                code = flowdir[r, c]
                if code == 0:
                    break
                dr, dc = D8_OFFSETS[code]
                r2, c2 = r + dr, c + dc
                if not (0 <= r2 < nr and 0 <= c2 < nc):
                    break
                r, c = r2, c2
    return count


class TestTopology:
    def test_star_hand_values(self, star_mesh):
        m = star_mesh
        assert m.n == 9
        center = m.cell_at(1, 1)
        assert center == 4
        assert np.array_equal(m.down, [4, 4, 4, 4, -1, 4, 4, 4, 4])
        assert np.array_equal(m.outlets, [4])
        assert m.drainage[center] == 9
        assert np.all(m.drainage[np.arange(9) != center] == 1)
        assert len(m.levels) == 2
        assert np.array_equal(np.sort(m.levels[0]), [0, 1, 2, 3, 5, 6, 7, 8])
        assert np.array_equal(m.levels[1], [4])

    def test_chain_hand_values(self, chain_mesh):
        m = chain_mesh
        assert np.array_equal(m.down, [1, 2, 3, -1])
        assert np.array_equal(m.drainage, [1, 2, 3, 4])
        assert np.array_equal(m.order, [0, 1, 2, 3])
        assert [list(l) for l in m.levels] == [[0], [1], [2], [3]]
        assert m.cell_area == 1000.0 * 1000.0

    def test_order_upstream_first(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            fd = synthetic_flowdir((9, 9), rng)
            mesh = build_mesh(fd, dx=100.0)
            pos = np.empty(mesh.n, dtype=np.int64)
            pos[mesh.order] = np.arange(mesh.n)
            for i in range(mesh.n):
                d = mesh.down[i]
                if d >= 0:
                    assert pos[i] < pos[d]

    def test_drainage_matches_path_walk(self):
        rng = np.random.default_rng(4)
        for _ in range(4):
            fd = synthetic_flowdir((8, 10), rng)
            mesh = build_mesh(fd, dx=100.0)
            oracle = walk_drainage(fd)
            assert np.array_equal(
                mesh.to_grid(mesh.drainage.astype(float)), oracle.astype(float)
            )

    def test_rotation_invariance(self):
        # rotating the grid by 180 degrees (with opposite codes) rotates
        # the drainage field
        flip = {0: 0, 1: 5, 2: 6, 3: 7, 4: 8, 5: 1, 6: 2, 7: 3, 8: 4}
        rng = np.random.default_rng(21)
        fd = synthetic_flowdir((7, 9), rng)
        fd_rot = np.vectorize(flip.get)(fd[::-1, ::-1])
        d1 = build_mesh(fd, dx=50.0).drainage_grid
        d2 = build_mesh(fd_rot, dx=50.0).drainage_grid
        assert np.array_equal(d2, d1[::-1, ::-1])

    def test_upstream_mask_chain(self, chain_mesh):
        m = chain_mesh
        assert np.array_equal(m.upstream_mask(2), [True, True, True, False])
        assert np.array_equal(m.upstream_mask(0), [True, False, False, False])

    def test_edge_codes_become_outlets(self):
        # a cell pointing off the grid drains nowhere
        fd = np.array([[7, 3, 0]])  # (0,0) points west off-grid
        mesh = build_mesh(fd, dx=10.0)
        assert np.array_equal(mesh.down, [-1, 2, -1])
        assert np.array_equal(np.sort(mesh.outlets), [0, 2])
        assert np.array_equal(mesh.drainage, [1, 1, 2])

    def test_inactive_target_is_outlet(self):
        fd = np.array([[3, 3, 0]])
        active = np.array([[True, True, False]])
        mesh = build_mesh(fd, dx=10.0, active=active)
        assert mesh.n == 2
        assert np.array_equal(mesh.down, [1, -1])

    def test_cycle_detected(self):
        fd = np.array([[3, 7, 5], [1, 3, 0]])  # (0,0)<->(0,1)
        with pytest.raises(CycleError):
            build_mesh(fd, dx=10.0)

    def test_invalid_code(self):
        fd = np.array([[3, 9], [1, 0]])
        with pytest.raises(InvalidCodeError, match="9"):
            build_mesh(fd, dx=10.0)

    def test_ambiguous_outlet(self):
        # two disconnected pairs, both outlets drain 2 cells
        fd = np.array([[3, 0], [3, 0]])
        with pytest.raises(AmbiguousOutletError):
            build_mesh(fd, dx=10.0)

    def test_bad_cellsize(self):
        with pytest.raises(ShapeMismatchError):
            build_mesh(FD_CHAIN_1X4, dx=0.0)


class TestGridConversions:
    def test_round_trip(self, star_mesh):
        rng = np.random.default_rng(0)
        vals = rng.normal(size=star_mesh.n)
        grid = star_mesh.to_grid(vals)
        assert np.array_equal(star_mesh.from_grid(grid), vals)

    def test_partial_mask_fill(self):
        fd = np.array([[3, 3, 0]])
        active = np.array([[True, True, False]])
        mesh = build_mesh(fd, dx=10.0, active=active)
        grid = mesh.to_grid(np.array([1.0, 2.0]))
        assert np.isnan(grid[0, 2])
        assert grid[0, 0] == 1.0 and grid[0, 1] == 2.0

    def test_cell_at_off_grid(self, star_mesh):
        with pytest.raises(GaugeOffGridError):
            star_mesh.cell_at(3, 0)

    def test_cell_at_inactive(self):
        fd = np.array([[3, 3, 0]])
        active = np.array([[True, True, False]])
        mesh = build_mesh(fd, dx=10.0, active=active)
        with pytest.raises(GaugeOffGridError):
            mesh.cell_at(0, 2)

    def test_shape_mismatch(self, star_mesh):
        with pytest.raises(ShapeMismatchError):
            star_mesh.from_grid(np.zeros((2, 2)))
        with pytest.raises(ShapeMismatchError):
            star_mesh.to_grid(np.zeros(5))


class TestDelineate:
    def test_by_id_and_coordinates(self, chain_mesh):
        masks = delineate(chain_mesh, [2, (0, 1)])
        assert np.array_equal(masks[0], [True, True, True, False])
        assert np.array_equal(masks[1], [True, True, False, False])

    def test_off_grid(self, chain_mesh):
        with pytest.raises(GaugeOffGridError):
            delineate(chain_mesh, [17])


class TestGaugeSet:
    def test_default_weights(self, chain_mesh):
        gs = GaugeSet(names=["a", "b", "c"], cells=[0, 1, 3],
                      roles=["cal", "cal", "val"], mesh=chain_mesh)
        assert np.allclose(gs.weights, [0.5, 0.5, 0.0])
        assert gs.subset("cal") == [0, 1]
        assert gs.subset("val") == [2]

    def test_combined_mask(self, chain_mesh):
        gs = GaugeSet(names=["a"], cells=[1], roles=["cal"], mesh=chain_mesh)
        assert np.array_equal(gs.combined_mask(), [True, True, False, False])

    def test_duplicate_names(self, chain_mesh):
        with pytest.raises(ShapeMismatchError):
            GaugeSet(names=["a", "a"], cells=[0, 1], roles=["cal", "cal"],
                     mesh=chain_mesh)

    def test_bad_role(self, chain_mesh):
        with pytest.raises(ShapeMismatchError):
            GaugeSet(names=["a"], cells=[0], roles=["test"], mesh=chain_mesh)

    def test_negative_weights(self, chain_mesh):
        with pytest.raises(ShapeMismatchError):
            GaugeSet(names=["a"], cells=[0], roles=["cal"],
                     weights=[-1.0], mesh=chain_mesh)

    def test_cell_outside_mesh(self, chain_mesh):
        with pytest.raises(GaugeOffGridError):
            GaugeSet(names=["a"], cells=[9], roles=["cal"], mesh=chain_mesh)


class TestSyntheticNetworks:
    def test_single_outlet_full_drainage(self):
        rng = np.random.default_rng(7)
        for _ in range(6):
            fd = synthetic_flowdir((11, 13), rng)
            mesh = build_mesh(fd, dx=200.0)
            assert mesh.outlets.size == 1
            out = int(mesh.outlets[0])
            assert mesh.drainage[out] == mesh.n
            r, c = mesh.rows[out], mesh.cols[out]
            assert r in (0, 10) and c in (0, 12)  # corner outlet
