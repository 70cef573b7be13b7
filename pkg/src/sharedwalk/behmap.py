"""Behavioural map pipeline: synthesise trajectories, slice, classify, store.

Offline, trajectories generated over the roadmap are cut into one feature
window per behaviour-grid cell crossing; each window is classified and
merged into per-cell (class, travel-direction) clusters — the behavioural
map.  Online, a planned mission looks up the reference pair for each cell
it crosses, and live windows are scored against that reference class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import rotate_window, window
from .geometry import ClothoidPath, fit_spline, sample_path
from .neural import (
    CLASS_NAMES,
    LEFT,
    MODEL_FORMAT_VERSION,
    RIGHT,
    STRAIGHT,
    ConfidenceVector,
    Sequential,
    classify,
    encode,
)
from .roadmap import Roadmap, RoadmapError, shortest_path
from .worldmap import BehaviourGrid, MapError, OccupancyGrid, cell_of, path_is_free

__all__ = [
    "BehMapError",
    "CellBehaviour",
    "BehaviouralMap",
    "Mission",
    "Crossing",
    "label_for",
    "extract_crossings",
    "generate_trajectories",
    "balanced_windows",
    "reconstruction_windows",
    "build_behavioural_map",
    "plan_mission",
    "confidence",
    "save_behavioural_map",
    "load_behavioural_map",
    "LABEL_THRESHOLD",
    "MERGE_THRESHOLD",
    "WINDOW_SAMPLES",
    "SAMPLE_SPACING",
    "KAPPA_FEASIBLE",
]

LABEL_THRESHOLD = math.radians(15.0)  # net heading change separating turns
MERGE_THRESHOLD = math.radians(45.0)  # same-class clusters closer than this merge
WINDOW_SAMPLES = 12
SAMPLE_SPACING = 0.1
WAYPOINT_SPACING = 1.6  # roadmap waypoints are thinned to about this before fitting
KAPPA_FEASIBLE = 2.0  # 1/m; a rollator cannot track a turn tighter than 0.5 m radius
WAYPOINT_JITTER = 0.28  # m; lateral waypoint wander mimicking human gait variability
BEHMAP_FORMAT_VERSION = 1


class BehMapError(RuntimeError):
    """Raised for behavioural-map construction or lookup failures."""


@dataclass
class CellBehaviour:
    """One (class, direction) cluster inside a behaviour cell."""

    cell: tuple[int, int]
    cls: int  # LEFT / RIGHT / STRAIGHT
    direction: float  # mean travel direction in the cell, map frame, (-pi, pi]
    centroid: np.ndarray  # mean latent of member windows (length 5)
    member_count: int

    def __post_init__(self):
        if self.member_count < 1:
            raise BehMapError("cluster must have at least one member")
        self.direction = _wrap(self.direction)


@dataclass(frozen=True)
class BehaviouralMap:
    cells: dict[tuple[int, int], list[CellBehaviour]]
    provenance: dict

    def total_members(self) -> int:
        return sum(cb.member_count for lst in self.cells.values() for cb in lst)


@dataclass(frozen=True)
class Mission:
    p0: tuple[float, float]
    pf: tuple[float, float]
    path: ClothoidPath
    samples: np.ndarray  # sample_path output along the reference path
    references: dict[tuple[int, int], tuple[int, float]]  # cell -> (class, direction)
    bg: BehaviourGrid  # cell decomposition the references are keyed by

    def cell_at(self, x: float, y: float) -> tuple[int, int]:
        """Reference cell for a pose: the cell of the nearest path sample.

        Snapping to the route keeps the lookup defined even when the walker
        drifts slightly off the planned cells.
        """
        d = np.hypot(self.samples[:, 1] - x, self.samples[:, 2] - y)
        i = int(np.argmin(d))
        try:
            cell = cell_of(self.bg, self.samples[i, 1:3])
        except MapError:
            cell = None  # path endpoint can sit exactly on the grid boundary
        if cell in self.references:
            return cell
        # anchor-less first cells have no reference; use the nearest that does
        covered = list(self.references)
        if not covered:
            raise BehMapError("mission has no cell references")
        centres = np.array([self.bg.cell_center(c) for c in covered])
        j = int(np.argmin(np.hypot(centres[:, 0] - x, centres[:, 1] - y)))
        return covered[j]


@dataclass(frozen=True)
class Crossing:
    """One traversal of a behaviour cell by a sampled path."""

    cell: tuple[int, int]
    window: np.ndarray  # 5 x n feature window ending nearest the cell centre
    label: int  # geometric net-heading-change label
    direction: float  # circular mean heading inside the cell
    anchor: int  # index of the window's final sample in the source array


def _wrap(a: float) -> float:
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def _circular_mean(angles: np.ndarray) -> float:
    return math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles))))


def _angle_dist(a: float, b: float) -> float:
    return abs(_wrap(a - b))


def label_for(samples: np.ndarray, k: int, n: int = WINDOW_SAMPLES) -> int:
    """Class of the window ending at index ``k`` from its net heading change."""
    dtheta = float(samples[k, 3] - samples[k - (n - 1), 3])
    if dtheta > LABEL_THRESHOLD:
        return LEFT
    if dtheta < -LABEL_THRESHOLD:
        return RIGHT
    return STRAIGHT


def _uniform_samples(samples: np.ndarray) -> np.ndarray:
    """Drop the trailing sample if its spacing is irregular.

    sample_path always appends the exact endpoint, so the final spacing is
    usually shorter; feature windows require uniform spacing.
    """
    if len(samples) >= 3:
        ds = np.diff(samples[:, 0])
        if abs(ds[-1] - np.median(ds)) > 0.05 * np.median(ds):
            return samples[:-1]
    return samples


def extract_crossings(
    samples: np.ndarray, bg: BehaviourGrid, n: int = WINDOW_SAMPLES
) -> list[Crossing]:
    """One Crossing per contiguous run of samples inside a behaviour cell.

    The feature window ends at the run's sample nearest the cell centre;
    runs whose anchor lacks n samples of history are skipped.
    """
    samples = _uniform_samples(np.asarray(samples, dtype=float))
    out: list[Crossing] = []
    run_start = None
    run_cell = None
    for idx in range(len(samples) + 1):
        if idx < len(samples):
            try:
                cell = cell_of(bg, samples[idx, 1:3])
            except MapError:
                cell = None
        else:
            cell = None
        if cell != run_cell:
            if run_cell is not None:
                out.extend(_close_run(samples, run_start, idx, run_cell, bg, n))
            run_start, run_cell = idx, cell
    return out


def _close_run(samples, start, stop, cell, bg, n) -> list[Crossing]:
    cx, cy = bg.cell_center(cell)
    d = np.hypot(samples[start:stop, 1] - cx, samples[start:stop, 2] - cy)
    k = start + int(np.argmin(d))
    if k < n - 1:
        return []
    return [
        Crossing(
            cell=cell,
            window=window(samples, k, n),
            label=label_for(samples, k, n),
            direction=_circular_mean(samples[start:stop, 3]),
            anchor=k,
        )
    ]


def _decimate(waypoints, spacing: float = WAYPOINT_SPACING):
    """Thin a polyline to roughly uniform spacing, keeping both endpoints."""
    kept = [waypoints[0]]
    acc = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        acc += math.dist(a, b)
        if acc >= spacing:
            kept.append(b)
            acc = 0.0
    if kept[-1] != waypoints[-1]:
        kept.append(waypoints[-1])
    return kept


def _densify(points, spacing: float = WAYPOINT_SPACING):
    """Subdivide polyline segments longer than ``spacing``.

    Mutually visible endpoints route as a single segment, which leaves
    nothing for the wander model to displace.
    """
    out = [points[0]]
    for a, b in zip(points, points[1:]):
        d = math.dist(a, b)
        for i in range(1, int(d / spacing) + 1):
            t = i * spacing / d
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        if out[-1] != b:
            out.append(b)
    return out


def _jitter(points, rng: np.random.Generator, amplitude: float):
    """Bow the interior waypoints with a slow sinusoidal lateral wander.

    White per-point noise would cost curvature out of proportion to the
    heading change it buys; a low-frequency sway is how human paths
    actually deviate from a straightedge.
    """
    if amplitude <= 0.0:
        return points
    points = _densify(points)
    if len(points) < 3:
        return points
    # wavelengths well above the window length: a short sway mostly cancels
    # within one window, buying heading overlap at a steep curvature cost
    amp = float(rng.uniform(0.3, 1.0)) * amplitude
    wavelength = float(rng.uniform(4.0, 7.0))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    s = 0.0
    out = [points[0]]
    for prev, p, nxt in zip(points, points[1:], points[2:]):
        s += math.dist(prev, p)
        dx, dy = nxt[0] - prev[0], nxt[1] - prev[1]
        norm = math.hypot(dx, dy) or 1.0
        off = amp * math.sin(2.0 * math.pi * s / wavelength + phase)
        out.append((p[0] - dy / norm * off, p[1] + dx / norm * off))
    out.append(points[-1])
    return out


def _route_samples(
    grid: OccupancyGrid,
    rm: Roadmap,
    p0,
    pf,
    max_passes: int = 2,
    kappa_max: float | None = None,
    rng: np.random.Generator | None = None,
    jitter: float = 0.0,
) -> tuple[ClothoidPath, np.ndarray]:
    """Roadmap route -> decimated waypoints -> clothoid spline -> samples."""
    waypoints = shortest_path(rm, grid, p0, pf)
    decimated = _decimate(waypoints)
    if rng is not None and jitter > 0.0:
        # wander is the point here: no clean fallback, the caller retries
        candidates = (_jitter(decimated, rng, jitter),)
    else:
        candidates = (decimated, waypoints)
    polyline = sum(math.dist(a, b) for a, b in zip(decimated, decimated[1:]))
    for points in candidates:
        if len(points) < 2:
            continue
        path = fit_spline(points, max_passes=max_passes)
        # a degenerate G1 fit can loop kilometres between metre-spaced
        # waypoints; reject on length before paying to sample/collide it
        if path.total_length > 2.0 * polyline + 1.0:
            continue
        if not path_is_free(grid, path, rm.clearance, step=SAMPLE_SPACING):
            continue
        samples = sample_path(path, SAMPLE_SPACING)
        if kappa_max is not None and np.max(np.abs(samples[:, 4])) > kappa_max:
            continue
        return path, samples
    raise BehMapError(f"could not fit a feasible collision-free path {p0} -> {pf}")


def generate_trajectories(
    grid: OccupancyGrid,
    rm: Roadmap,
    count: int,
    seed: int,
    bg: BehaviourGrid | None = None,
    balance_tolerance: float = 0.05,
    max_attempts_factor: int = 160,
) -> list[np.ndarray]:
    """Sample ``count`` collision-free trajectories with balanced window labels.

    Random endpoint pairs are routed through the roadmap, given lateral
    waypoint wander (human gait is not a straightedge), and spline-fitted;
    candidates sharper than a rollator can track (|kappa| > KAPPA_FEASIBLE)
    are discarded, and a survivor is kept only if it leaves every class's
    share of windows within ``balance_tolerance`` of 1/3, or at least no
    further from it.
    """
    if count < 1:
        raise BehMapError("count must be positive")
    bg = bg or BehaviourGrid.covering(grid)
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = grid.world_extent
    counts = np.zeros(3, dtype=int)
    paths: list[np.ndarray] = []
    attempts = 0
    max_attempts = max_attempts_factor * count
    while len(paths) < count and attempts < max_attempts:
        attempts += 1
        p0 = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        pf = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        if math.dist(p0, pf) < 3.0 * WAYPOINT_SPACING:
            continue
        try:
            _, samples = _route_samples(
                grid, rm, p0, pf,
                kappa_max=KAPPA_FEASIBLE, rng=rng, jitter=WAYPOINT_JITTER,
            )
        except (RoadmapError, BehMapError):
            continue
        crossings = extract_crossings(samples, bg)
        if not crossings:
            continue
        cand = counts.copy()
        for c in crossings:
            cand[c.label] += 1
        # accept when balanced, or when the candidate keeps the histogram
        # within one tolerance of where it already is: a hard "never worse"
        # ratchet deadlocks on realistic maps where every path is mostly
        # straight and the balanced histogram is unreachable path-wise
        if _balance_ok(cand, balance_tolerance) or (
            _worst_deviation(cand) <= _worst_deviation(counts) + balance_tolerance
        ):
            counts = cand
            paths.append(samples)
    if len(paths) < count:
        raise BehMapError(
            f"only {len(paths)}/{count} balanced trajectories after {attempts} attempts"
        )
    return paths


def _worst_deviation(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return math.inf  # empty state: any first contribution is an improvement
    return float(np.max(np.abs(counts / total - 1.0 / 3.0)))


def _balance_ok(counts: np.ndarray, tol: float) -> bool:
    return _worst_deviation(counts) <= tol


def balanced_windows(
    paths: list[np.ndarray],
    bg: BehaviourGrid,
    seed: int,
    n: int = WINDOW_SAMPLES,
) -> tuple[np.ndarray, np.ndarray]:
    """Equally partitioned labelled windows subsampled from path crossings.

    Each class is down-sampled to the size of the rarest class so the
    training set is balanced; deterministic given ``seed``.
    """
    crossings = [c for samples in paths for c in extract_crossings(samples, bg, n)]
    if not crossings:
        raise BehMapError("no labelled windows could be extracted")
    by_class: dict[int, list[Crossing]] = {LEFT: [], RIGHT: [], STRAIGHT: []}
    for c in crossings:
        by_class[c.label].append(c)
    target = min(len(v) for v in by_class.values())
    if target == 0:
        raise BehMapError(
            "at least one class has no windows; cannot balance "
            + str({CLASS_NAMES[k]: len(v) for k, v in by_class.items()})
        )
    rng = np.random.default_rng(seed)
    kept: list[Crossing] = []
    for cls in (LEFT, RIGHT, STRAIGHT):
        idx = rng.choice(len(by_class[cls]), size=target, replace=False)
        kept.extend(by_class[cls][i] for i in sorted(idx))
    order = rng.permutation(len(kept))
    windows = np.array([kept[i].window for i in order])
    labels = np.array([kept[i].label for i in order])
    return windows, labels


RECONSTRUCTION_STRIDE = 10  # samples (1 m) between autoencoder window anchors


def reconstruction_windows(
    paths: list[np.ndarray],
    n: int = WINDOW_SAMPLES,
    stride: int = RECONSTRUCTION_STRIDE,
) -> np.ndarray:
    """Unlabelled windows sampled densely along every path.

    The autoencoder trains on the natural window distribution of the whole
    dataset rather than the class-balanced crossing subset: reconstruction
    has no classes to balance, and the crossing subset is small enough that
    the network memorises it (train/validation RMSE gap of ~3x) instead of
    generalising.
    """
    if stride < 1:
        raise BehMapError("stride must be >= 1")
    wins = []
    for samples in paths:
        samples = _uniform_samples(np.asarray(samples, dtype=float))
        for k in range(n - 1, len(samples), stride):
            wins.append(window(samples, k, n))
    if not wins:
        raise BehMapError("no reconstruction windows could be extracted")
    return np.array(wins)


def build_behavioural_map(
    paths: list[np.ndarray],
    encoder: Sequential,
    head: Sequential,
    bg: BehaviourGrid,
    provenance: dict | None = None,
) -> BehaviouralMap:
    """Classify every cell crossing and merge into per-cell clusters.

    Crossings are sorted before merging so the result does not depend on
    trajectory order.  Same-class clusters within MERGE_THRESHOLD of each
    other share one entry whose centroid is the running mean latent.
    """
    crossings: list[Crossing] = []
    for samples in paths:
        crossings.extend(extract_crossings(samples, bg))
    crossings.sort(key=lambda c: (c.cell, c.direction, c.window.tobytes()))

    cells: dict[tuple[int, int], list[CellBehaviour]] = {}
    sums: dict[int, tuple[np.ndarray, np.ndarray]] = {}  # id(cluster) -> latent/dir sums
    for c in crossings:
        z = encode(encoder, c.window)
        cls = classify(head, z).argmax
        best = None
        for cb in cells.get(c.cell, []):
            if cb.cls == cls and _angle_dist(cb.direction, c.direction) < MERGE_THRESHOLD:
                if best is None or _angle_dist(cb.direction, c.direction) < _angle_dist(
                    best.direction, c.direction
                ):
                    best = cb
        if best is None:
            cb = CellBehaviour(c.cell, cls, c.direction, z.copy(), 1)
            cells.setdefault(c.cell, []).append(cb)
            sums[id(cb)] = (z.copy(), np.array([math.cos(c.direction), math.sin(c.direction)]))
        else:
            zsum, dsum = sums[id(best)]
            zsum += z
            dsum += (math.cos(c.direction), math.sin(c.direction))
            best.member_count += 1
            best.centroid = zsum / best.member_count
            best.direction = math.atan2(dsum[1], dsum[0])
    # merging can drift two same-class clusters inside the threshold; consolidate
    for cell, lst in cells.items():
        changed = True
        while changed:
            changed = False
            for ia in range(len(lst)):
                for ib in range(ia + 1, len(lst)):
                    a, b = lst[ia], lst[ib]
                    if a.cls == b.cls and _angle_dist(a.direction, b.direction) < MERGE_THRESHOLD:
                        za, da = sums.pop(id(a))
                        zb, db = sums.pop(id(b))
                        merged = CellBehaviour(
                            cell,
                            a.cls,
                            math.atan2(da[1] + db[1], da[0] + db[0]),
                            (za + zb) / (a.member_count + b.member_count),
                            a.member_count + b.member_count,
                        )
                        sums[id(merged)] = (za + zb, da + db)
                        lst[ia] = merged
                        del lst[ib]
                        changed = True
                        break
                if changed:
                    break
    prov = {
        "model_version": MODEL_FORMAT_VERSION,
        "trajectory_count": len(paths),
        **(provenance or {}),
    }
    return BehaviouralMap(cells=cells, provenance=prov)


def plan_mission(
    grid: OccupancyGrid,
    rm: Roadmap,
    bm: BehaviouralMap,
    p0,
    pf,
    bg: BehaviourGrid | None = None,
) -> Mission:
    """Route p0 -> pf and attach a (class, direction) reference per cell.

    The reference pair comes from the behavioural-map cluster matching the
    reference path's own geometric window label in that cell, picking the
    cluster nearest in direction; uncovered cells fall back to the path's
    own (label, direction).
    """
    bg = bg or BehaviourGrid.covering(grid)
    path, samples = _route_samples(grid, rm, p0, pf, max_passes=8)
    refs: dict[tuple[int, int], tuple[int, float]] = {}
    for c in extract_crossings(samples, bg):
        matching = [cb for cb in bm.cells.get(c.cell, []) if cb.cls == c.label]
        if matching:
            best = min(matching, key=lambda cb: _angle_dist(cb.direction, c.direction))
            refs[c.cell] = (best.cls, best.direction)
        else:
            refs[c.cell] = (c.label, c.direction)
    return Mission(
        p0=(float(p0[0]), float(p0[1])),
        pf=(float(pf[0]), float(pf[1])),
        path=path,
        samples=samples,
        references=refs,
        bg=bg,
    )


def confidence(
    mission: Mission,
    cell: tuple[int, int],
    live_window: np.ndarray | None,
    encoder: Sequential,
    head: Sequential,
) -> tuple[float | None, ConfidenceVector | None]:
    """Softmax confidence of the mission's reference class for a live window.

    The live window is rigidly rotated by -theta_ref about its first sample
    so travel direction is factored out before classification.  Returns
    (None, None) while the caller's window buffer is not yet full
    (``live_window`` is None) — "no confidence yet".
    """
    if live_window is None:
        return None, None
    if cell not in mission.references:
        raise BehMapError(f"cell {cell} is not on the mission route")
    ref_cls, ref_dir = mission.references[cell]
    aligned = rotate_window(live_window, -ref_dir)
    cv = classify(head, encode(encoder, aligned))
    return cv.of_class(ref_cls), cv


# ---------------------------------------------------------------------------
# Persistence


def save_behavioural_map(bm: BehaviouralMap, path) -> None:
    doc = {
        "format": "sharedwalk-behmap",
        "version": BEHMAP_FORMAT_VERSION,
        "provenance": bm.provenance,
        "cells": [
            {
                "cell": list(cb.cell),
                "class": CLASS_NAMES[cb.cls],
                "direction": cb.direction,
                "centroid": cb.centroid.tolist(),
                "member_count": cb.member_count,
            }
            for lst in bm.cells.values()
            for cb in lst
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_behavioural_map(path) -> BehaviouralMap:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BehMapError(f"unreadable behavioural map: {exc}") from exc
    if doc.get("format") != "sharedwalk-behmap" or doc.get("version") != BEHMAP_FORMAT_VERSION:
        raise BehMapError("behavioural map file version mismatch")
    prov = doc.get("provenance", {})
    if prov.get("model_version") != MODEL_FORMAT_VERSION:
        raise BehMapError(
            f"behavioural map was built with model version {prov.get('model_version')}, "
            f"current is {MODEL_FORMAT_VERSION}"
        )
    cells: dict[tuple[int, int], list[CellBehaviour]] = {}
    for item in doc["cells"]:
        cb = CellBehaviour(
            cell=tuple(item["cell"]),
            cls=CLASS_NAMES.index(item["class"]),
            direction=float(item["direction"]),
            centroid=np.asarray(item["centroid"], dtype=float),
            member_count=int(item["member_count"]),
        )
        cells.setdefault(cb.cell, []).append(cb)
    return BehaviouralMap(cells=cells, provenance=prov)
