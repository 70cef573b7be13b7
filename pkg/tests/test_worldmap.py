import math

import numpy as np
import pytest

from sharedwalk.geometry import ClothoidPath, ClothoidSegment, Pose2
from sharedwalk.worldmap import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    BehaviourGrid,
    MapError,
    OccupancyGrid,
    cell_of,
    is_free,
    load_map,
    make_cross_grid,
    make_empty_grid,
    path_is_free,
)


class TestLoadMap:
    def test_all_white_is_free(self):
        img = np.full((2, 2), 255, dtype=np.uint8)
        grid = load_map(img, {"resolution": 0.05})
        assert np.all(grid.cells == FREE)
        assert grid.width == 2 and grid.height == 2

    def test_all_black_is_occupied(self):
        img = np.zeros((3, 3), dtype=np.uint8)
        grid = load_map(img, {"resolution": 0.05})
        assert np.all(grid.cells == OCCUPIED)

    def test_mid_gray_is_unknown(self):
        img = np.full((1, 1), 128, dtype=np.uint8)
        grid = load_map(img, {"resolution": 0.1})
        assert grid.cells[0, 0] == UNKNOWN

    def test_checkerboard_flip(self):
        img = np.zeros((10, 10), dtype=np.uint8)
        img[::2, 1::2] = 255
        img[1::2, ::2] = 255
        grid = load_map(img, {"resolution": 1.0})
        ref = np.where(img[::-1] == 255, FREE, OCCUPIED)
        np.testing.assert_array_equal(grid.cells, ref)

    def test_yaml_metadata_with_comments(self, tmp_path):
        from PIL import Image

        img = np.full((4, 4), 255, dtype=np.uint8)
        img_path = tmp_path / "map.png"
        Image.fromarray(img).save(img_path)
        meta_path = tmp_path / "map.yaml"
        meta_path.write_text(
            "# a comment line\nresolution: 0.1\norigin: [1.0, 2.0, 0.0]\n"
            "occupied_thresh: 0.2\nfree_thresh: 0.8\n"
        )
        grid = load_map(img_path, meta_path)
        assert grid.resolution == 0.1
        assert grid.origin.x == 1.0 and grid.origin.y == 2.0

    def test_bad_resolution(self):
        with pytest.raises(MapError):
            load_map(np.zeros((2, 2), dtype=np.uint8), {"resolution": -1})

    def test_bad_image_shape(self):
        with pytest.raises(MapError):
            load_map(np.zeros((2, 2, 3), dtype=np.uint8), {"resolution": 0.1})


class TestIsFree:
    def test_interior_point_in_empty_map(self):
        grid = make_empty_grid(5, 5)
        assert is_free(grid, (2.5, 2.5), 0.2)

    def test_outside_grid(self):
        grid = make_empty_grid(5, 5)
        assert not is_free(grid, (-0.1, 2.0), 0.0)
        assert not is_free(grid, (5.1, 2.0), 0.0)

    def test_clearance_reaches_wall(self):
        grid = make_empty_grid(2, 2, resolution=0.1)
        cells = grid.cells.copy()
        cells[:, 10] = OCCUPIED  # wall at x in [1.0, 1.1]
        grid = OccupancyGrid(cells, grid.resolution, grid.origin)
        # point one cell away from the wall
        p = (0.95, 1.0)
        assert is_free(grid, p, 0.0)
        assert not is_free(grid, p, 0.15)

    def test_unknown_blocks(self):
        grid = make_empty_grid(1, 1, resolution=0.1)
        cells = grid.cells.copy()
        cells[5, 5] = UNKNOWN
        grid = OccupancyGrid(cells, grid.resolution, grid.origin)
        assert not is_free(grid, (0.55, 0.55), 0.0)

    def test_covered_cells_enumeration(self):
        # disc against an enumeration oracle on a random map
        rng = np.random.default_rng(5)
        cells = (rng.random((20, 20)) < 0.2).astype(np.uint8)
        grid = OccupancyGrid(cells, 0.1, Pose2(0, 0, 0))
        for _ in range(50):
            p = rng.uniform(0.3, 1.7, 2)
            clearance = rng.uniform(0.0, 0.25)
            expected = True
            for j in range(20):
                for i in range(20):
                    # nearest point of the cell rectangle to p
                    nx = min(max(p[0], i * 0.1), (i + 1) * 0.1)
                    ny = min(max(p[1], j * 0.1), (j + 1) * 0.1)
                    if (nx - p[0]) ** 2 + (ny - p[1]) ** 2 <= clearance**2 + 1e-12:
                        if cells[j, i] != FREE:
                            expected = False
            assert is_free(grid, p, clearance) == expected

    def test_monotone_in_clearance(self):
        grid = make_cross_grid()
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = rng.uniform(0, 12, 2)
            c = rng.uniform(0, 0.5)
            if is_free(grid, p, c):
                assert is_free(grid, p, c * rng.random())


class TestPathIsFree:
    def test_straight_free(self):
        grid = make_empty_grid(5, 5)
        path = ClothoidPath((ClothoidSegment(Pose2(1, 2.5, 0), 0.0, 0.0, 3.0),))
        assert path_is_free(grid, path, 0.3)

    def test_crossing_obstacle(self):
        grid = make_cross_grid()  # corridors along the middle of a 12x12 world
        path = ClothoidPath((ClothoidSegment(Pose2(1, 1, 0), 0.0, 0.0, 3.0),))
        assert not path_is_free(grid, path, 0.0)

    def test_tangent_matches_dense_oracle(self):
        grid = make_cross_grid()
        # hug the corridor wall at sub-resolution distance
        y = 5.0 + 0.31
        path = ClothoidPath((ClothoidSegment(Pose2(2, y, 0), 0.0, 0.0, 6.0),))
        coarse = path_is_free(grid, path, 0.3, step=grid.resolution)
        dense = path_is_free(grid, path, 0.3, step=grid.resolution / 10)
        assert coarse == dense


class TestBehaviourGrid:
    def test_floor_rule(self):
        bg = BehaviourGrid(0.0, 0.0, 10, 10)
        assert cell_of(bg, (0.5, 0.5)) == (0, 0)
        assert cell_of(bg, (1.0, 0.5)) == (1, 0)
        assert cell_of(bg, (3.7, 2.1)) == (3, 2)

    def test_out_of_extent(self):
        bg = BehaviourGrid(0.0, 0.0, 2, 2)
        with pytest.raises(MapError):
            cell_of(bg, (2.5, 0.5))

    def test_idempotent_within_cell(self):
        bg = BehaviourGrid(-3.0, 1.0, 8, 8)
        rng = np.random.default_rng(0)
        for _ in range(200):
            cell = (int(rng.integers(0, 8)), int(rng.integers(0, 8)))
            corner = (bg.origin_x + cell[0], bg.origin_y + cell[1])
            off = rng.uniform(0.0, 1.0 - 1e-9, 2)
            assert cell_of(bg, (corner[0] + off[0], corner[1] + off[1])) == cell

    def test_covering(self):
        grid = make_empty_grid(5.0, 3.0)
        bg = BehaviourGrid.covering(grid)
        assert (bg.extent_x, bg.extent_y) == (5, 3)
        assert bg.cell_center((0, 0)) == (0.5, 0.5)
