"""Procedural curriculum terrain and the three fixed evaluation scenarios.

A terrain is a row of square subterrains of increasing difficulty, where the
difficulty of level i is the fraction of ground area occupied by box
obstacles. Obstacles never overlap each other and always lie fully inside
their subterrain. Terrains are immutable after generation and serialize to
JSON deterministically (same seed, byte-identical file).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BoxObstacle, as_vec2

PLACEMENT_ATTEMPTS = 10_000


class TerrainError(Exception):
    """Raised for invalid configurations or out-of-bounds queries."""


@dataclass
class TerrainConfig:
    """Curriculum terrain parameters.

    Defaults: 50 levels ramping linearly from empty to 10% occupancy,
    1 m tall boxes with side lengths in [1.0, 1.5] m, 12 m square tiles.
    """

    n_levels: int = 50
    d_max: float = 0.1
    obstacle_height: float = 1.0
    size_range: tuple[float, float] = (1.0, 1.5)
    subterrain_extent: float = 12.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_levels < 1:
            raise TerrainError("n_levels must be >= 1")
        if not 0.0 <= self.d_max <= 1.0:
            raise TerrainError("d_max must lie in [0, 1]")
        s_min, s_max = self.size_range
        if s_min > s_max or s_min <= 0:
            raise TerrainError("invalid size_range")
        if s_max > self.subterrain_extent:
            raise TerrainError("obstacles cannot fit in the subterrain")


@dataclass
class Subterrain:
    level: int
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    difficulty: float
    obstacles: list[BoxObstacle] = field(default_factory=list)

    def contains(self, p) -> bool:
        x, y = as_vec2(p)
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax


@dataclass
class Terrain:
    """Immutable obstacle world: subterrains plus global bounds."""

    subterrains: list[Subterrain]
    bounds: tuple[float, float, float, float]

    @property
    def obstacles(self) -> list[BoxObstacle]:
        return [b for s in self.subterrains for b in s.obstacles]

    def in_bounds(self, p) -> bool:
        x, y = as_vec2(p)
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def height_at(self, p, t: float = 0.0) -> float:
        """Ground height at a point: obstacle height on occupied cells, else 0."""
        if not self.in_bounds(p):
            raise TerrainError(f"query {tuple(as_vec2(p))} outside terrain bounds")
        p = as_vec2(p)
        h = 0.0
        for box in self.obstacles:
            c = box.center_at(t)
            if np.all(np.abs(p - c) <= box.half_extents):
                h = max(h, box.height)
        return h

    def occupancy(self, p, t: float = 0.0) -> bool:
        return self.height_at(p, t) > 0.0

    def level_of(self, p) -> int:
        """Curriculum level of the subterrain containing a point."""
        for s in self.subterrains:
            if s.contains(p):
                return s.level
        raise TerrainError(f"point {tuple(as_vec2(p))} lies in no subterrain")


def _difficulty(level: int, cfg: TerrainConfig) -> float:
    if cfg.n_levels == 1:
        return 0.0
    return level / (cfg.n_levels - 1) * cfg.d_max


def _fill_subterrain(sub: Subterrain, cfg: TerrainConfig, rng: np.random.Generator) -> None:
    """Place non-overlapping boxes until the occupied fraction hits the target.

    The last box is resized toward the remaining area deficit (still clamped
    to the configured size range) so the realized fraction lands within a few
    tenths of a percent of the target; pure uniform sizing can overshoot low
    targets by the whole area of one box.
    """
    xmin, ymin, xmax, ymax = sub.bounds
    area_total = (xmax - xmin) * (ymax - ymin)
    target = sub.difficulty * area_total
    s_min, s_max = cfg.size_range
    occupied = 0.0

    while occupied < target:
        deficit = target - occupied
        if deficit <= 0.5 * s_min * s_min:
            break  # stopping lands closer to the target than one more box
        w = rng.uniform(s_min, s_max)
        l = rng.uniform(s_min, s_max)
        if w * l > deficit:
            side = min(max(math.sqrt(deficit), s_min), s_max)
            w = l = side
        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            cx = rng.uniform(xmin + w / 2, xmax - w / 2)
            cy = rng.uniform(ymin + l / 2, ymax - l / 2)
            ok = True
            for other in sub.obstacles:
                if (
                    abs(cx - other.center[0]) < w / 2 + other.half_extents[0]
                    and abs(cy - other.center[1]) < l / 2 + other.half_extents[1]
                ):
                    ok = False
                    break
            if ok:
                sub.obstacles.append(
                    BoxObstacle(
                        center=np.array([cx, cy]),
                        half_extents=np.array([w / 2, l / 2]),
                        height=cfg.obstacle_height,
                    )
                )
                occupied += w * l
                placed = True
                break
        if not placed:
            raise TerrainError(
                f"could not place obstacle in level {sub.level} after {PLACEMENT_ATTEMPTS} attempts"
            )


def generate(cfg: TerrainConfig) -> Terrain:
    """Generate the curriculum terrain: one square tile per level, in a row.

    Deterministic for a given seed. Level i gets difficulty
    i / (n_levels - 1) * d_max (linear ramp); level 0 is always empty.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    ext = cfg.subterrain_extent
    subterrains = []
    for i in range(cfg.n_levels):
        bounds = (i * ext, 0.0, (i + 1) * ext, ext)
        sub = Subterrain(level=i, bounds=bounds, difficulty=_difficulty(i, cfg))
        _fill_subterrain(sub, cfg, rng)
        subterrains.append(sub)
    global_bounds = (0.0, 0.0, cfg.n_levels * ext, ext)
    return Terrain(subterrains=subterrains, bounds=global_bounds)


# ---------------------------------------------------------------------------
# Fixed evaluation scenarios
# ---------------------------------------------------------------------------

SCENARIO_NAMES = ("empty", "corridor", "boxes")

_SCENARIO_BOUNDS = (-3.0, -5.5, 10.0, 6.5)
_SCENARIO_BOX_SIDE = 1.5
_SCENARIO_BOX_HEIGHT = 1.0
_PAIR_X = 3.0
_THIRD_X = 5.5  # 2.5 m beyond the first pair
_DYNAMIC_SPEED = 0.1
_DYNAMIC_START_Y = -1.25


def scenario(name: str, dynamic: bool = False) -> tuple[Terrain, list[np.ndarray]]:
    """Build one of the fixed benchmark scenarios plus its waypoint list.

    The object frame starts at the origin facing +x. ``boxes`` and ``empty``
    use two waypoints (one between the first obstacle pair, one 5.5 m away at
    45 degrees); ``corridor`` uses a single waypoint 7 m ahead. With
    ``dynamic`` the third box drifts in +y at 0.1 m/s starting from
    y = -1.25 m instead of sitting at the centerline.
    """
    if name not in SCENARIO_NAMES:
        raise TerrainError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")

    half = _SCENARIO_BOX_SIDE / 2
    obstacles: list[BoxObstacle] = []

    def pair(gap: float) -> list[BoxObstacle]:
        cy = gap / 2 + half  # inner faces separated by exactly `gap`
        return [
            BoxObstacle(np.array([_PAIR_X, cy]), np.array([half, half]), _SCENARIO_BOX_HEIGHT),
            BoxObstacle(np.array([_PAIR_X, -cy]), np.array([half, half]), _SCENARIO_BOX_HEIGHT),
        ]

    if name == "corridor":
        obstacles += pair(gap=2.0)
        waypoints = [np.array([7.0, 0.0])]
    else:
        wp1 = np.array([_PAIR_X, 0.0])
        wp2 = wp1 + 5.5 * np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])
        waypoints = [wp1, wp2]
        if name == "boxes":
            obstacles += pair(gap=2.5)
            if not dynamic:
                obstacles.append(
                    BoxObstacle(np.array([_THIRD_X, 0.0]), np.array([half, half]), _SCENARIO_BOX_HEIGHT)
                )

    if dynamic:
        obstacles.append(
            BoxObstacle(
                np.array([_THIRD_X, _DYNAMIC_START_Y]),
                np.array([half, half]),
                _SCENARIO_BOX_HEIGHT,
                velocity=np.array([0.0, _DYNAMIC_SPEED]),
            )
        )

    sub = Subterrain(level=0, bounds=_SCENARIO_BOUNDS, difficulty=0.0, obstacles=obstacles)
    return Terrain(subterrains=[sub], bounds=_SCENARIO_BOUNDS), waypoints


# ---------------------------------------------------------------------------
# Serialization (JSON; schema documented in the README)
# ---------------------------------------------------------------------------


def terrain_to_dict(terrain: Terrain) -> dict:
    return {
        "bounds": list(terrain.bounds),
        "subterrains": [
            {
                "level": s.level,
                "bounds": list(s.bounds),
                "difficulty": s.difficulty,
                "obstacles": [
                    {
                        "center": b.center.tolist(),
                        "half_extents": b.half_extents.tolist(),
                        "height": b.height,
                        "velocity": b.velocity.tolist(),
                    }
                    for b in s.obstacles
                ],
            }
            for s in terrain.subterrains
        ],
    }


def terrain_from_dict(data: dict) -> Terrain:
    subterrains = [
        Subterrain(
            level=int(s["level"]),
            bounds=tuple(s["bounds"]),
            difficulty=float(s["difficulty"]),
            obstacles=[
                BoxObstacle(
                    center=np.array(b["center"]),
                    half_extents=np.array(b["half_extents"]),
                    height=float(b["height"]),
                    velocity=np.array(b.get("velocity", [0.0, 0.0])),
                )
                for b in s["obstacles"]
            ],
        )
        for s in data["subterrains"]
    ]
    return Terrain(subterrains=subterrains, bounds=tuple(data["bounds"]))


def save_terrain(terrain: Terrain, path) -> None:
    with open(path, "w") as f:
        json.dump(terrain_to_dict(terrain), f, indent=2, sort_keys=True)
        f.write("\n")


def load_terrain(path) -> Terrain:
    with open(path) as f:
        return terrain_from_dict(json.load(f))
