import math

import numpy as np
import pytest

from sharedwalk.behmap import (
    BehMapError,
    BehaviouralMap,
    CellBehaviour,
    build_behavioural_map,
    confidence,
    extract_crossings,
    generate_trajectories,
    label_for,
    load_behavioural_map,
    plan_mission,
    save_behavioural_map,
)
from sharedwalk.neural import LEFT, RIGHT, STRAIGHT, TrainConfig, train_autoencoder, train_classifier
from sharedwalk.roadmap import build_prm
from sharedwalk.worldmap import BehaviourGrid, make_empty_grid, path_is_free


def arc_samples(kappa, theta0=0.0, x0=0.0, y0=0.0, length=4.0, ds=0.1):
    """Constant-curvature path samples (s, x, y, theta, kappa)."""
    s = np.arange(0.0, length + ds / 2, ds)
    theta = theta0 + kappa * s
    if abs(kappa) > 1e-12:
        x = x0 + (np.sin(theta) - math.sin(theta0)) / kappa
        y = y0 - (np.cos(theta) - math.cos(theta0)) / kappa
    else:
        x = x0 + s * math.cos(theta0)
        y = y0 + s * math.sin(theta0)
    return np.column_stack([s, x, y, theta, np.full_like(s, kappa)])


@pytest.fixture(scope="module")
def models():
    """Small encoder + head trained on arc windows of known class."""
    rng = np.random.default_rng(0)
    windows, labels = [], []
    for _ in range(70):
        kappa = rng.choice([rng.uniform(0.3, 0.7), -rng.uniform(0.3, 0.7), rng.uniform(-0.05, 0.05)])
        samples = arc_samples(kappa, theta0=rng.uniform(-math.pi, math.pi), length=1.5)
        k = 11
        w = samples[k - 11 : k + 1]
        win = np.empty((5, 12))
        win[0] = w[:, 1] - w[0, 1]
        win[1] = w[:, 2] - w[0, 2]
        win[2] = np.cos(w[:, 3])
        win[3] = np.sin(w[:, 3])
        win[4] = w[:, 4]
        windows.append(win)
        labels.append(label_for(samples, k))
    windows = np.array(windows)
    labels = np.array(labels)
    enc, _, _ = train_autoencoder(windows, TrainConfig(epochs=120, batch_size=16, seed=2))
    head, metrics = train_classifier(
        enc, windows, labels, TrainConfig(epochs=600, batch_size=16, seed=2)
    )
    assert metrics["overall_accuracy"] >= 0.8
    return enc, head


class TestLabelRule:
    def test_straight(self):
        assert label_for(arc_samples(0.0), 20) == STRAIGHT

    def test_left_turn(self):
        assert label_for(arc_samples(0.5), 20) == LEFT

    def test_right_turn(self):
        assert label_for(arc_samples(-0.5), 20) == RIGHT

    def test_threshold_boundary(self):
        # net heading change of 1.1 * 15 degrees over the window flips the label
        kappa = 1.1 * math.radians(15.0) / 1.1
        assert label_for(arc_samples(kappa), 20) == LEFT
        assert label_for(arc_samples(0.9 * math.radians(15.0) / 1.1, length=4.0), 20) == STRAIGHT


class TestExtractCrossings:
    def test_straight_path_one_crossing_per_cell(self):
        bg = BehaviourGrid(0.0, 0.0, 6, 1)
        samples = arc_samples(0.0, y0=0.5, length=5.9)
        crossings = extract_crossings(samples, bg)
        # first cell lacks window history (anchor at x ~ 0.5 has only 6 samples)
        assert [c.cell for c in crossings] == [(i, 0) for i in range(1, 6)]
        for c in crossings:
            assert c.label == STRAIGHT
            assert c.direction == pytest.approx(0.0, abs=1e-9)
            cx, _ = bg.cell_center(c.cell)
            # the window ends at the sample nearest the cell centre
            assert abs(samples[c.anchor, 1] - cx) <= 0.05 + 1e-9

    def test_outside_grid_ignored(self):
        bg = BehaviourGrid(0.0, 0.0, 2, 1)
        samples = arc_samples(0.0, y0=0.5, length=5.0)
        crossings = extract_crossings(samples, bg)
        assert all(c.cell[0] < 2 for c in crossings)


class TestGenerateTrajectories:
    def test_paths_are_collision_free_and_deterministic(self):
        grid = make_empty_grid(8, 8)
        rm = build_prm(grid, clearance=0.3, seed=1)
        paths = generate_trajectories(grid, rm, count=5, seed=2)
        assert len(paths) == 5
        for samples in paths:
            assert len(samples) >= 2
            # re-check every sample against the clearance disc
            from sharedwalk.worldmap import is_free

            for row in samples[:: max(1, len(samples) // 20)]:
                assert is_free(grid, row[1:3], 0.3)
        again = generate_trajectories(grid, rm, count=5, seed=2)
        for a, b in zip(paths, again):
            assert np.array_equal(a, b)

    def test_bad_count(self):
        grid = make_empty_grid(4, 4)
        rm = build_prm(grid, clearance=0.3, seed=1)
        with pytest.raises(BehMapError):
            generate_trajectories(grid, rm, count=0, seed=0)


class TestBalancedWindows:
    def test_equal_partition(self):
        from sharedwalk.behmap import balanced_windows

        bg = BehaviourGrid(-20.0, -20.0, 40, 40)
        paths = [
            arc_samples(0.45, length=6.0),
            arc_samples(-0.45, length=6.0),
            arc_samples(0.0, length=12.0),
            arc_samples(0.0, theta0=1.0, length=12.0),
        ]
        windows, labels = balanced_windows(paths, bg, seed=3)
        counts = np.bincount(labels, minlength=3)
        assert counts[0] == counts[1] == counts[2] > 0
        assert windows.shape == (len(labels), 5, 12)
        w2, l2 = balanced_windows(paths, bg, seed=3)
        assert np.array_equal(windows, w2) and np.array_equal(labels, l2)

    def test_missing_class_errors(self):
        from sharedwalk.behmap import balanced_windows

        bg = BehaviourGrid(-20.0, -20.0, 40, 40)
        with pytest.raises(BehMapError):
            balanced_windows([arc_samples(0.0, length=10.0)], bg, seed=0)


class TestBuildBehaviouralMap:
    def test_single_straight_pass(self, models):
        enc, head = models
        bg = BehaviourGrid(0.0, 0.0, 8, 1)
        samples = arc_samples(0.0, y0=0.5, length=7.9)
        bm = build_behavioural_map([samples], enc, head, bg)
        crossings = extract_crossings(samples, bg)
        assert bm.total_members() == len(crossings)
        for lst in bm.cells.values():
            assert len(lst) == 1
            cb = lst[0]
            assert cb.cls == STRAIGHT
            assert cb.direction == pytest.approx(0.0, abs=1e-6)
            assert cb.centroid.shape == (5,)

    def test_antiparallel_passes_stay_distinct(self, models):
        enc, head = models
        bg = BehaviourGrid(0.0, 0.0, 8, 1)
        east = arc_samples(0.0, y0=0.5, length=7.9)
        west = arc_samples(0.0, theta0=math.pi, x0=7.9, y0=0.5, length=7.9)
        bm = build_behavioural_map([east, west], enc, head, bg)
        for cell, lst in bm.cells.items():
            dirs = sorted(abs(cb.direction) for cb in lst)
            if len(lst) == 2:
                assert dirs[0] == pytest.approx(0.0, abs=1e-6)
                assert dirs[1] == pytest.approx(math.pi, abs=1e-6)

    def test_order_independence(self, models):
        enc, head = models
        bg = BehaviourGrid(0.0, 0.0, 8, 2)
        a = arc_samples(0.0, y0=0.5, length=7.9)
        b = arc_samples(0.0, y0=1.5, length=7.9)
        c = arc_samples(0.0, theta0=math.pi, x0=7.9, y0=0.6, length=7.9)
        bm1 = build_behavioural_map([a, b, c], enc, head, bg)
        bm2 = build_behavioural_map([c, a, b], enc, head, bg)
        assert set(bm1.cells) == set(bm2.cells)
        for cell in bm1.cells:
            l1 = sorted(bm1.cells[cell], key=lambda cb: cb.direction)
            l2 = sorted(bm2.cells[cell], key=lambda cb: cb.direction)
            assert len(l1) == len(l2)
            for x, y in zip(l1, l2):
                assert x.cls == y.cls and x.member_count == y.member_count
                assert x.direction == pytest.approx(y.direction, abs=1e-9)
                np.testing.assert_allclose(x.centroid, y.centroid, atol=1e-9)

    def test_merge_threshold_invariant(self, models):
        enc, head = models
        bg = BehaviourGrid(0.0, 0.0, 8, 3)
        paths = [
            arc_samples(0.0, theta0=math.radians(d), y0=1.5, length=6.0)
            for d in (-20, -10, 0, 10, 20)
        ]
        bm = build_behavioural_map(paths, enc, head, bg)
        for lst in bm.cells.values():
            for i in range(len(lst)):
                for j in range(i + 1, len(lst)):
                    if lst[i].cls == lst[j].cls:
                        d = abs(
                            math.remainder(lst[i].direction - lst[j].direction, 2 * math.pi)
                        )
                        assert d >= math.radians(45.0) - 1e-9


class TestMissionAndConfidence:
    @staticmethod
    @pytest.fixture(scope="class")
    def world(models):
        enc, head = models
        grid = make_empty_grid(8, 8)
        rm = build_prm(grid, clearance=0.3, seed=4)
        paths = generate_trajectories(grid, rm, count=8, seed=4)
        bg = BehaviourGrid.covering(grid)
        bm = build_behavioural_map(paths, enc, head, bg)
        return grid, rm, bg, bm

    def test_mission_references_cover_route(self, world, models):
        grid, rm, bg, bm = world
        mission = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 7.0), bg)
        assert path_is_free(grid, mission.path, 0.3)
        assert mission.references
        for cls, direction in mission.references.values():
            assert cls in (LEFT, RIGHT, STRAIGHT)
            assert -math.pi < direction <= math.pi

    def test_mission_deterministic(self, world):
        grid, rm, bg, bm = world
        m1 = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 7.0), bg)
        m2 = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 7.0), bg)
        assert m1.references == m2.references
        assert np.array_equal(m1.samples, m2.samples)

    def test_confidence_outputs(self, world, models):
        enc, head = models
        grid, rm, bg, bm = world
        mission = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 1.0), bg)
        cell = next(iter(mission.references))
        live = arc_samples(0.0, y0=1.0, length=1.5)
        from sharedwalk.features import window

        w = window(live, k=11, n=12)
        eps, cv = confidence(mission, cell, w, enc, head)
        assert 0.0 <= eps <= 1.0
        assert cv.left + cv.right + cv.straight == pytest.approx(1.0, abs=1e-9)

    def test_no_confidence_before_buffer_full(self, world, models):
        enc, head = models
        grid, rm, bg, bm = world
        mission = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 1.0), bg)
        assert confidence(mission, next(iter(mission.references)), None, enc, head) == (
            None,
            None,
        )

    def test_off_route_cell_errors(self, world, models):
        enc, head = models
        grid, rm, bg, bm = world
        mission = plan_mission(grid, rm, bm, (1.0, 1.0), (7.0, 1.0), bg)
        with pytest.raises(BehMapError):
            confidence(mission, (999, 999), np.zeros((5, 12)), enc, head)


class TestPersistence:
    def make_map(self):
        cb = CellBehaviour((2, 3), LEFT, 0.7, np.arange(5.0), 4)
        cb2 = CellBehaviour((2, 3), STRAIGHT, -2.0, np.ones(5), 1)
        return BehaviouralMap(
            cells={(2, 3): [cb, cb2]},
            provenance={"model_version": 1, "trajectory_count": 2, "seed": 9},
        )

    def test_round_trip(self, tmp_path):
        bm = self.make_map()
        f = tmp_path / "bm.json"
        save_behavioural_map(bm, f)
        bm2 = load_behavioural_map(f)
        assert set(bm2.cells) == {(2, 3)}
        for a, b in zip(bm.cells[(2, 3)], bm2.cells[(2, 3)]):
            assert a.cls == b.cls and a.member_count == b.member_count
            assert a.direction == b.direction
            np.testing.assert_array_equal(a.centroid, b.centroid)
        assert bm2.provenance["seed"] == 9

    def test_version_mismatch(self, tmp_path):
        f = tmp_path / "bm.json"
        f.write_text('{"format": "sharedwalk-behmap", "version": 99}')
        with pytest.raises(BehMapError):
            load_behavioural_map(f)

    def test_model_version_mismatch(self, tmp_path):
        import json

        bm = self.make_map()
        f = tmp_path / "bm.json"
        save_behavioural_map(bm, f)
        doc = json.loads(f.read_text())
        doc["provenance"]["model_version"] = 99
        f.write_text(json.dumps(doc))
        with pytest.raises(BehMapError):
            load_behavioural_map(f)
