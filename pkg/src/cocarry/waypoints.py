"""Free-space waypoint graphs, shortest-path sampling, commands, curriculum.

Training paths are produced by sampling points with a safety clearance from
obstacles, connecting neighbors whose swept-disc corridor is free, running
Dijkstra, and keeping paths whose total length falls in a configured band.
The directional command toward the next waypoint is a unit vector expressed
in the object frame.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose2, as_vec2, points_box_distance
from .terrain import Terrain

SWEEP_STEP = 0.1  # m between collision checks along a candidate edge
MAX_EXHAUSTIVE_SOURCES = 5000


class SamplingError(Exception):
    """Raised when free space is too small to place the requested points."""


@dataclass
class FreeSpaceGraph:
    """Sampled free-space nodes with clearance-validated edges."""

    nodes: np.ndarray  # (N, 2)
    adjacency: list[list[tuple[int, float]]]
    node_levels: np.ndarray  # (N,) curriculum level of each node's subterrain

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


@dataclass
class PathAssignment:
    """A waypoint sequence assigned to one system instance.

    ``start`` is where the system is placed; ``waypoints`` are the targets to
    visit in order. ``reached_fraction`` is waypoints reached over total.
    """

    start: np.ndarray
    waypoints: np.ndarray  # (M, 2)
    level: int = 0
    next_index: int = 0
    reached_fraction: float = 0.0

    @property
    def completed(self) -> bool:
        return self.next_index >= len(self.waypoints)

    @property
    def total_length(self) -> float:
        pts = np.vstack([self.start, self.waypoints])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass
class CurriculumState:
    level: int
    max_level: int  # number of levels; valid indices are 0 .. max_level - 1

    def __post_init__(self):
        if not 0 <= self.level < self.max_level:
            raise ValueError("curriculum level out of range")


def _min_obstacle_distance(points: np.ndarray, terrain: Terrain) -> np.ndarray:
    """Min signed distance from each point to any obstacle at t=0."""
    d = np.full(len(points), np.inf)
    for box in terrain.obstacles:
        d = np.minimum(d, points_box_distance(points, box))
    return d


def _edge_is_clear(a: np.ndarray, b: np.ndarray, terrain: Terrain, clearance: float) -> bool:
    length = float(np.linalg.norm(b - a))
    n = max(int(math.ceil(length / SWEEP_STEP)), 1)
    s = np.linspace(0.0, 1.0, n + 1)
    pts = a + s[:, None] * (b - a)
    return bool(np.all(_min_obstacle_distance(pts, terrain) >= clearance))


def sample_graph(
    terrain: Terrain,
    n_points: int = 2000,
    clearance: float = 0.75,
    seed: int = 0,
    connection_radius: float = 1.5,
) -> FreeSpaceGraph:
    """Sample free-space nodes and connect clearance-validated edges.

    Nodes keep at least ``clearance`` from every obstacle (t=0 snapshot);
    edges connect pairs within ``connection_radius`` whose swept disc of the
    same radius stays free, checked at 10 cm steps.
    """
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = terrain.bounds
    nodes: list[np.ndarray] = []
    attempts = 0
    max_attempts = max(1000 * n_points, 100_000)
    while len(nodes) < n_points:
        batch = min(4 * (n_points - len(nodes)), 65536)
        attempts += batch
        cand = rng.uniform((xmin, ymin), (xmax, ymax), size=(batch, 2))
        ok = _min_obstacle_distance(cand, terrain) >= clearance
        for p in cand[ok]:
            if len(nodes) < n_points:
                nodes.append(p)
        if attempts > max_attempts:
            raise SamplingError(
                f"placed only {len(nodes)}/{n_points} points after {attempts} samples"
            )
    node_arr = np.array(nodes)

    levels = np.zeros(n_points, dtype=int)
    for i, p in enumerate(node_arr):
        levels[i] = terrain.level_of(p)

    adjacency: list[list[tuple[int, float]]] = [[] for _ in range(n_points)]
    tree = cKDTree(node_arr)
    for i, j in sorted(tree.query_pairs(connection_radius)):
        if _edge_is_clear(node_arr[i], node_arr[j], terrain, clearance):
            w = float(np.linalg.norm(node_arr[i] - node_arr[j]))
            adjacency[i].append((j, w))
            adjacency[j].append((i, w))
    return FreeSpaceGraph(nodes=node_arr, adjacency=adjacency, node_levels=levels)


def dijkstra(adjacency: list[list[tuple[int, float]]], source: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-source shortest paths. Returns (distances, parents).

    Deterministic: the heap breaks distance ties by node index and
    relaxations update only on strict improvement.
    """
    n = len(adjacency)
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=int)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, parent


def _reconstruct(parent: np.ndarray, target: int) -> list[int]:
    path = [target]
    while parent[path[-1]] >= 0:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return path


def shortest_paths(
    g: FreeSpaceGraph,
    l_min: float = 5.0,
    l_max: float = 12.0,
    n_keep: int = 1500,
    seed: int = 0,
) -> list[PathAssignment]:
    """Sample up to ``n_keep`` graph-shortest paths with lengths in [l_min, l_max].

    Runs Dijkstra from every source (subsampled above 5000 nodes), counts the
    qualifying (source, target) pairs, picks n_keep of them uniformly, and
    reconstructs only the chosen paths on a second pass. Returns fewer than
    n_keep when not enough pairs qualify.
    """
    if g.n_nodes == 0:
        raise ValueError("empty graph")
    rng = np.random.default_rng(seed)
    sources = np.arange(g.n_nodes)
    if g.n_nodes > MAX_EXHAUSTIVE_SOURCES:
        sources = rng.choice(g.n_nodes, size=MAX_EXHAUSTIVE_SOURCES, replace=False)
        sources.sort()

    counts = np.zeros(len(sources), dtype=np.int64)
    for k, s in enumerate(sources):
        dist, _ = dijkstra(g.adjacency, int(s))
        counts[k] = int(np.count_nonzero((dist >= l_min) & (dist <= l_max)))
    total = int(counts.sum())
    if total == 0:
        return []

    n_pick = min(n_keep, total)
    chosen = rng.choice(total, size=n_pick, replace=False)
    chosen.sort()

    offsets = np.concatenate([[0], np.cumsum(counts)])
    paths: list[PathAssignment] = []
    for k, s in enumerate(sources):
        lo, hi = offsets[k], offsets[k + 1]
        picks = chosen[(chosen >= lo) & (chosen < hi)] - lo
        if len(picks) == 0:
            continue
        dist, parent = dijkstra(g.adjacency, int(s))
        qualifying = np.flatnonzero((dist >= l_min) & (dist <= l_max))
        for idx in picks:
            target = int(qualifying[idx])
            node_ids = _reconstruct(parent, target)
            pts = g.nodes[node_ids]
            paths.append(
                PathAssignment(
                    start=pts[0].copy(),
                    waypoints=pts[1:].copy(),
                    level=int(g.node_levels[int(s)]),
                )
            )
    return paths


def command(object_pose: Pose2, path: PathAssignment, r_wp: float = 0.5) -> np.ndarray | None:
    """Unit direction to the next waypoint, in the object frame.

    Waypoints within ``r_wp`` of the object are consumed first; completing
    the last one returns None (goal reached). Advances the path counters in
    place.
    """
    pos = object_pose.position
    while not path.completed:
        if np.linalg.norm(path.waypoints[path.next_index] - pos) <= r_wp:
            path.next_index += 1
            path.reached_fraction = path.next_index / len(path.waypoints)
        else:
            break
    if path.completed:
        return None
    diff = path.waypoints[path.next_index] - pos
    direction = diff / np.linalg.norm(diff)
    return object_pose.rotation().T @ direction


def update_curriculum(
    state: CurriculumState,
    reached_fraction: float,
    rng: int | np.random.Generator = 0,
) -> CurriculumState:
    """Promotion/demotion rule applied at episode end.

    More than half the path traversed promotes one level; less than a quarter
    demotes one (floored at 0). Promotion past the top level reassigns the
    system to a uniformly random level to keep old levels in rotation.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    level = state.level
    if reached_fraction > 0.5:
        level += 1
        if level > state.max_level - 1:
            level = int(rng.integers(0, state.max_level))
    elif reached_fraction < 0.25:
        level = max(level - 1, 0)
    return CurriculumState(level=level, max_level=state.max_level)


def paths_to_dict(paths: list[PathAssignment]) -> dict:
    return {
        "paths": [
            {
                "start": p.start.tolist(),
                "waypoints": p.waypoints.tolist(),
                "level": p.level,
            }
            for p in paths
        ]
    }


def paths_from_dict(data: dict) -> list[PathAssignment]:
    return [
        PathAssignment(
            start=np.array(p["start"]),
            waypoints=np.array(p["waypoints"]).reshape(-1, 2),
            level=int(p["level"]),
        )
        for p in data["paths"]
    ]


def save_paths(paths: list[PathAssignment], path) -> None:
    with open(path, "w") as f:
        json.dump(paths_to_dict(paths), f, indent=2, sort_keys=True)
        f.write("\n")


def load_paths(path) -> list[PathAssignment]:
    with open(path) as f:
        return paths_from_dict(json.load(f))
