"""Probabilistic roadmap over the free space, with deterministic seeding.

Node count targets 4 nodes per square metre of free space; each node links
to its 8 nearest neighbours whose connecting straight segment is collision
free.  Queries attach the endpoints to up to 5 visible nodes and run
Dijkstra with index-ordered tie-breaking.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .worldmap import OccupancyGrid, is_free, segment_is_free

__all__ = ["Roadmap", "RoadmapError", "build_prm", "shortest_path", "save_roadmap", "load_roadmap"]

NODES_PER_M2 = 4.0
K_NEIGHBOURS = 8
QUERY_ATTACHMENTS = 5
ROADMAP_FORMAT_VERSION = 1


class RoadmapError(RuntimeError):
    """Raised when the roadmap cannot be built or queried."""


@dataclass(frozen=True)
class Roadmap:
    """Immutable sampled roadmap: nodes, weighted adjacency, provenance seed."""

    nodes: np.ndarray  # (N, 2) world points
    edges: tuple[tuple[int, int, float], ...]  # i < j, Euclidean weight
    rng_seed: int
    clearance: float

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    def adjacency(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in range(len(self.nodes))]
        for i, j, w in self.edges:
            adj[i].append((j, w))
            adj[j].append((i, w))
        for lst in adj:
            lst.sort()
        return adj


def build_prm(
    grid: OccupancyGrid,
    clearance: float,
    seed: int,
    k: int = K_NEIGHBOURS,
    density: float = NODES_PER_M2,
) -> Roadmap:
    """Sample a PRM over the free space of ``grid``; deterministic given seed."""
    free_area = grid.free_area()
    target = int(round(density * free_area))
    if target < 2:
        raise RoadmapError("free space too small to host a roadmap")
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = grid.world_extent

    nodes = []
    attempts = 0
    max_attempts = 1000 * target
    while len(nodes) < target and attempts < max_attempts:
        attempts += 1
        p = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        if is_free(grid, p, clearance):
            nodes.append(p)
    if len(nodes) < 2:
        raise RoadmapError("could not sample enough collision-free nodes")
    pts = np.asarray(nodes)

    tree = cKDTree(pts)
    kq = min(k + 1, len(pts))
    _, nbrs = tree.query(pts, k=kq)
    edges: set[tuple[int, int]] = set()
    for i in range(len(pts)):
        for j in np.atleast_1d(nbrs[i]):
            j = int(j)
            if j == i:
                continue
            a, b = (i, j) if i < j else (j, i)
            if (a, b) in edges:
                continue
            if segment_is_free(grid, pts[a], pts[b], clearance):
                edges.add((a, b))
    _repair_connectivity(grid, pts, edges, clearance)
    weighted = tuple(
        (a, b, float(np.hypot(*(pts[a] - pts[b])))) for a, b in sorted(edges)
    )
    return Roadmap(nodes=pts, edges=weighted, rng_seed=seed, clearance=clearance)


def _repair_connectivity(grid, pts, edges: set, clearance: float, max_tries: int = 500) -> None:
    """Merge graph components through the closest visible cross-component pairs."""
    n = len(pts)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)

    while True:
        roots = {}
        for i in range(n):
            roots.setdefault(find(i), []).append(i)
        if len(roots) == 1:
            return
        comps = sorted(roots.values(), key=len)
        small = comps[0]
        rest = [i for c in comps[1:] for i in c]
        pairs = sorted(
            ((float(np.hypot(*(pts[a] - pts[b]))), a, b) for a in small for b in rest)
        )
        for _, a, b in pairs[:max_tries]:
            if segment_is_free(grid, pts[a], pts[b], clearance):
                edges.add((a, b) if a < b else (b, a))
                parent[find(a)] = find(b)
                break
        else:
            return  # genuinely unreachable component; leave it to query-time errors


def _dijkstra(adj, n: int, source: int) -> tuple[np.ndarray, np.ndarray]:
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=int)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            if done[v]:
                continue  # rewiring a finalised node can cycle prev on 0-weight edges
            nd = d + w
            # deterministic tie-break: strictly-better distance, else lower prev index
            if nd < dist[v] - 1e-15 or (abs(nd - dist[v]) <= 1e-15 and u < prev[v]):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, prev


def shortest_path(rm: Roadmap, grid: OccupancyGrid, p0, pf) -> list[tuple[float, float]]:
    """Shortest collision-free route p0 -> roadmap -> pf (Euclidean weights)."""
    p0 = (float(p0[0]), float(p0[1]))
    pf = (float(pf[0]), float(pf[1]))
    if p0 == pf:
        return [p0]

    n = len(rm.nodes)
    adj = rm.adjacency()
    # temporary nodes n (start) and n+1 (goal)
    adj.append([])
    adj.append([])
    tree = cKDTree(rm.nodes)
    for tmp_idx, p in ((n, p0), (n + 1, pf)):
        order = tree.query(np.asarray(p), k=min(3 * QUERY_ATTACHMENTS, n))[1]
        attached = 0
        for j in np.atleast_1d(order):
            j = int(j)
            if segment_is_free(grid, p, rm.nodes[j], rm.clearance):
                w = float(np.hypot(*(np.asarray(p) - rm.nodes[j])))
                adj[tmp_idx].append((j, w))
                adj[j].append((tmp_idx, w))
                attached += 1
                if attached >= QUERY_ATTACHMENTS:
                    break
        if attached == 0:
            raise RoadmapError(f"cannot connect point {p} to the roadmap")
    if segment_is_free(grid, p0, pf, rm.clearance):
        w = float(math.hypot(pf[0] - p0[0], pf[1] - p0[1]))
        adj[n].append((n + 1, w))
        adj[n + 1].append((n, w))

    dist, prev = _dijkstra(adj, n + 2, n)
    if not np.isfinite(dist[n + 1]):
        raise RoadmapError("no path: endpoints lie in disconnected components")
    idx_path = [n + 1]
    while idx_path[-1] != n:
        idx_path.append(int(prev[idx_path[-1]]))
    idx_path.reverse()
    out = []
    for idx in idx_path:
        if idx == n:
            out.append(p0)
        elif idx == n + 1:
            out.append(pf)
        else:
            out.append((float(rm.nodes[idx][0]), float(rm.nodes[idx][1])))
    return out


def save_roadmap(rm: Roadmap, path) -> None:
    """Persist a roadmap as versioned JSON for caching between runs."""
    doc = {
        "format": "sharedwalk-roadmap",
        "version": ROADMAP_FORMAT_VERSION,
        "seed": rm.rng_seed,
        "clearance": rm.clearance,
        "nodes": rm.nodes.tolist(),
        "edges": [[i, j, w] for i, j, w in rm.edges],
    }
    Path(path).write_text(json.dumps(doc))


def load_roadmap(path) -> Roadmap:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RoadmapError(f"unreadable roadmap file: {exc}") from exc
    if doc.get("format") != "sharedwalk-roadmap" or doc.get("version") != ROADMAP_FORMAT_VERSION:
        raise RoadmapError("roadmap file version mismatch")
    return Roadmap(
        nodes=np.asarray(doc["nodes"], dtype=float),
        edges=tuple((int(i), int(j), float(w)) for i, j, w in doc["edges"]),
        rng_seed=int(doc["seed"]),
        clearance=float(doc["clearance"]),
    )
