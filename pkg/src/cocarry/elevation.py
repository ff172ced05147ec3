"""Simulated elevation mapping: per-agent sensing, hole filling, map fusion.

Each agent senses an 8 m square height grid around itself from the
ground-truth terrain. Cells hidden behind tall obstacle faces (the sensor
sits below the box tops) come back invalid; a max filter fills them from
their neighbors, and the two filtered maps are fused into a coarse grid
centered on the object frame for the policy observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, rot2
from .terrain import Terrain

POLICY_ROWS = 13  # round(4.0 m / 0.3 m)
POLICY_COLS = 20  # round(6.0 m / 0.3 m)
POLICY_RESOLUTION = 0.3

_EPS = 1e-9


@dataclass
class SenseConfig:
    extent: float = 8.0  # side of the square sensing window (m)
    resolution: float = 0.04
    sensor_height: float = 0.5  # eye height of the occlusion rays (m)


@dataclass
class HeightMap:
    """Grid of cell heights with a validity mask.

    Row index i runs along the frame x-axis, column index j along the frame
    y-axis; cell (i, j) is centered at ((i - (rows-1)/2) * res,
    (j - (cols-1)/2) * res) in frame coordinates. Heights are meters above
    flat ground; invalid cells hold 0 and are ignored downstream.
    """

    frame: Pose2
    resolution: float
    heights: np.ndarray  # (rows, cols) float
    valid: np.ndarray  # (rows, cols) bool

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.heights.shape != self.valid.shape:
            raise ValueError("heights and valid shapes differ")

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    def cell_centers_local(self) -> np.ndarray:
        """Frame-local cell centers, shape (rows, cols, 2)."""
        xs = (np.arange(self.rows) - (self.rows - 1) / 2) * self.resolution
        ys = (np.arange(self.cols) - (self.cols - 1) / 2) * self.resolution
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def cell_centers_world(self) -> np.ndarray:
        local = self.cell_centers_local().reshape(-1, 2)
        world = self.frame.position + local @ self.frame.rotation().T
        return world.reshape(self.rows, self.cols, 2)

    def copy(self) -> "HeightMap":
        return HeightMap(self.frame.copy(), self.resolution, self.heights.copy(), self.valid.copy())


def _ground_truth_heights(points: np.ndarray, terrain: Terrain, t: float) -> np.ndarray:
    h = np.zeros(len(points))
    for box in terrain.obstacles:
        c = box.center_at(t)
        inside = np.all(np.abs(points - c) <= box.half_extents, axis=1)
        h[inside] = np.maximum(h[inside], box.height)
    return h


def _occluded(points: np.ndarray, cell_h: np.ndarray, agent_xy: np.ndarray,
              sensor_h: float, terrain: Terrain, t: float) -> np.ndarray:
    """Cells whose sight ray from the sensor to the cell top hits a box face.

    The ray runs from (agent, sensor height) to (cell, cell height); the
    cell is hidden iff the ray's chord through some box footprint starts
    before the cell and dips below that box's top.
    """
    d = points - agent_xy
    blocked = np.zeros(len(points), dtype=bool)
    for box in terrain.obstacles:
        c = box.center_at(t)
        lo = np.zeros(len(points))
        hi = np.ones(len(points))
        feasible = np.ones(len(points), dtype=bool)
        for k in range(2):
            dk = d[:, k]
            degenerate = np.abs(dk) < 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = (c[k] - box.half_extents[k] - agent_xy[k]) / dk
                t_hi = (c[k] + box.half_extents[k] - agent_xy[k]) / dk
            t0k = np.minimum(t_lo, t_hi)
            t1k = np.maximum(t_lo, t_hi)
            in_slab = np.abs(agent_xy[k] - c[k]) <= box.half_extents[k]
            t0k = np.where(degenerate, np.where(in_slab, -np.inf, np.inf), t0k)
            t1k = np.where(degenerate, np.where(in_slab, np.inf, -np.inf), t1k)
            lo = np.maximum(lo, t0k)
            hi = np.minimum(hi, t1k)
            feasible &= ~(degenerate & ~in_slab)
        chord = feasible & (lo <= hi) & (lo < 1.0 - _EPS)
        z_lo = sensor_h + (cell_h - sensor_h) * lo
        z_hi = sensor_h + (cell_h - sensor_h) * hi
        dips = (z_lo < box.height - _EPS) | ((hi < 1.0 - _EPS) & (z_hi < box.height - _EPS))
        blocked |= chord & dips
    return blocked


def sense(terrain: Terrain, agent_pose: Pose2, t: float = 0.0,
          cfg: SenseConfig | None = None) -> HeightMap:
    """Sample a world-aligned height grid centered on the agent.

    Heights come straight from the ground truth; the validity mask encodes
    line-of-sight occlusion from the agent's sensor height, so the far-side
    tops of tall boxes and the ground shadow behind them come back invalid.
    Cells outside the terrain bounds are invalid too.
    """
    cfg = cfg or SenseConfig()
    n = round(cfg.extent / cfg.resolution)
    frame = Pose2(agent_pose.position.copy(), 0.0)
    grid = HeightMap(frame, cfg.resolution, np.zeros((n, n)), np.ones((n, n), dtype=bool))
    pts = grid.cell_centers_world().reshape(-1, 2)

    xmin, ymin, xmax, ymax = terrain.bounds
    in_bounds = (
        (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    )
    heights = _ground_truth_heights(pts, terrain, t)
    visible = ~_occluded(pts, heights, agent_pose.position, cfg.sensor_height, terrain, t)
    valid = in_bounds & visible
    heights[~valid] = 0.0
    grid.heights = heights.reshape(n, n)
    grid.valid = valid.reshape(n, n)
    return grid


def max_filter(m: HeightMap) -> HeightMap:
    """Fill invalid cells from the max of their valid 8-neighbors, iterated.

    Equivalent to repeating "every invalid cell with a valid neighbor becomes
    valid with the max neighbor height" until nothing changes, implemented as
    a layer-synchronous frontier sweep. Valid cells are never modified;
    cells in regions with no valid boundary stay invalid.
    """
    rows, cols = m.heights.shape
    heights = np.zeros((rows + 2, cols + 2))
    valid = np.zeros((rows + 2, cols + 2), dtype=bool)
    heights[1:-1, 1:-1] = m.heights
    valid[1:-1, 1:-1] = m.valid
    hf = heights.ravel()
    vf = valid.ravel()
    w = cols + 2
    offsets = np.array([-w - 1, -w, -w + 1, -1, 1, w - 1, w, w + 1])

    queued = vf.copy()
    border = np.zeros((rows + 2, cols + 2), dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    queued |= border.ravel()

    invalid_idx = np.flatnonzero(~queued)
    if invalid_idx.size:
        nb = invalid_idx[:, None] + offsets[None, :]
        frontier = invalid_idx[vf[nb].any(axis=1)]
        queued[frontier] = True
    else:
        frontier = invalid_idx

    while frontier.size:
        nb = frontier[:, None] + offsets[None, :]
        nb_valid = vf[nb]
        vals = np.where(nb_valid, hf[nb], -np.inf)
        hf[frontier] = vals.max(axis=1)
        vf[frontier] = True
        cand = np.unique(nb[~queued[nb]])
        queued[cand] = True
        frontier = cand

    out = m.copy()
    out.heights = heights[1:-1, 1:-1]
    out.valid = valid[1:-1, 1:-1]
    return out


def fuse(
    m1: HeightMap,
    m2: HeightMap,
    object_frame: Pose2,
    rows: int = POLICY_ROWS,
    cols: int = POLICY_COLS,
    resolution: float = POLICY_RESOLUTION,
) -> HeightMap:
    """Merge two agent maps into a coarse grid aligned with the object frame.

    Every valid source cell scatters into the output cell containing it; an
    output cell takes the maximum over all contributors from both maps.
    Cells covered by neither map are zero and flagged invalid.
    """
    acc = np.full(rows * cols, -np.inf)
    rot_t = rot2(object_frame.yaw).T
    for m in (m1, m2):
        src_valid = m.valid.ravel()
        if not src_valid.any():
            continue
        pts = m.cell_centers_world().reshape(-1, 2)[src_valid]
        local = (pts - object_frame.position) @ rot_t.T
        i = np.rint(local[:, 0] / resolution + (rows - 1) / 2).astype(int)
        j = np.rint(local[:, 1] / resolution + (cols - 1) / 2).astype(int)
        ok = (i >= 0) & (i < rows) & (j >= 0) & (j < cols)
        np.maximum.at(acc, i[ok] * cols + j[ok], m.heights.ravel()[src_valid][ok])
    covered = np.isfinite(acc)
    acc[~covered] = 0.0
    return HeightMap(
        frame=object_frame.copy(),
        resolution=resolution,
        heights=acc.reshape(rows, cols),
        valid=covered.reshape(rows, cols),
    )


def augment(
    m: HeightMap,
    seed: int,
    noise_std: float = 0.02,
    artifact_prob: float = 0.01,
    artifact_height: float = 0.4,
) -> HeightMap:
    """Training-noise model: Gaussian height noise plus sparse bar artifacts.

    Valid cells get zero-mean Gaussian perturbations and, with a small
    per-cell probability, are raised to the artifact height (the carried bar
    dipping into the camera view reads as a low obstacle). Deterministic for
    a given seed; invalid cells are untouched.
    """
    rng = np.random.default_rng(seed)
    out = m.copy()
    mask = m.valid
    noise = rng.normal(0.0, noise_std, size=m.heights.shape)
    out.heights = np.where(mask, m.heights + noise, m.heights)
    artifacts = (rng.uniform(size=m.heights.shape) < artifact_prob) & mask
    out.heights = np.where(artifacts, np.maximum(out.heights, artifact_height), out.heights)
    return out


def save_heightmap(m: HeightMap, path) -> None:
    """Write the portable grid text format (header + row-major body)."""
    with open(path, "w") as f:
        f.write("cocarry-heightmap v1\n")
        f.write(f"{m.rows} {m.cols}\n")
        f.write(f"{m.resolution!r}\n")
        f.write(f"{m.frame.position[0]!r} {m.frame.position[1]!r} {m.frame.yaw!r}\n")
        for row in m.heights:
            f.write(" ".join(repr(v) for v in row) + "\n")
        for row in m.valid:
            f.write(" ".join("1" if v else "0" for v in row) + "\n")


def load_heightmap(path) -> HeightMap:
    with open(path) as f:
        magic = f.readline().strip()
        if magic != "cocarry-heightmap v1":
            raise ValueError(f"not a heightmap file: {magic!r}")
        rows, cols = (int(x) for x in f.readline().split())
        resolution = float(f.readline())
        fx, fy, yaw = (float(x) for x in f.readline().split())
        heights = np.array([[float(x) for x in f.readline().split()] for _ in range(rows)])
        valid = np.array([[c == "1" for c in f.readline().split()] for _ in range(rows)])
    return HeightMap(Pose2(np.array([fx, fy]), yaw), resolution, heights, valid)
