"""Planar geometric primitives: poses, box obstacles, signed distances, SAT collision.

All positions are 2D world coordinates in meters unless a frame is named.
Obstacles are axis-aligned boxes that may translate at constant velocity;
their position is evaluated lazily at a query time ``t`` so terrain objects
stay immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    return math.pi - (math.pi - a) % TWO_PI


def rot2(yaw: float) -> np.ndarray:
    """2x2 rotation matrix for a planar yaw angle."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def as_vec2(p) -> np.ndarray:
    """Coerce to a float64 array of shape (2,)."""
    v = np.asarray(p, dtype=float)
    if v.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {v.shape}")
    return v


@dataclass
class Pose2:
    """Planar pose: position plus yaw, yaw kept in (-pi, pi]."""

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.position = as_vec2(self.position)
        self.yaw = wrap_angle(float(self.yaw))

    def rotation(self) -> np.ndarray:
        return rot2(self.yaw)

    def transform(self, p_local) -> np.ndarray:
        """Map a point from this frame to world coordinates."""
        return self.position + self.rotation() @ as_vec2(p_local)

    def inverse_transform(self, p_world) -> np.ndarray:
        """Map a world point into this frame."""
        return self.rotation().T @ (as_vec2(p_world) - self.position)

    def copy(self) -> "Pose2":
        return Pose2(self.position.copy(), self.yaw)


def world_to_frame(p_world, frame: Pose2) -> np.ndarray:
    """Inverse rigid transform of a world point by ``frame``."""
    return frame.inverse_transform(p_world)


def frame_to_world(p_local, frame: Pose2) -> np.ndarray:
    """Rigid transform of a frame-local point to world coordinates."""
    return frame.transform(p_local)


@dataclass
class BoxObstacle:
    """Axis-aligned box, optionally drifting at constant velocity.

    Attributes:
        center: box center at t=0 (m)
        half_extents: half sizes along x and y (m), strictly positive
        height: obstacle height (m), strictly positive
        velocity: rigid drift velocity (m/s), zero for static boxes
    """

    center: np.ndarray
    half_extents: np.ndarray
    height: float = 1.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.center = as_vec2(self.center)
        self.half_extents = as_vec2(self.half_extents)
        self.velocity = as_vec2(self.velocity)
        if not np.all(self.half_extents > 0):
            raise ValueError("half_extents must be positive")
        if not self.height > 0:
            raise ValueError("height must be positive")

    def center_at(self, t: float) -> np.ndarray:
        """Box center displaced rigidly by velocity * t."""
        return self.center + self.velocity * t


@dataclass
class Footprint:
    """Rectangular agent body, given as half sizes along the body axes."""

    half_length: float = 0.40
    half_width: float = 0.25

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("footprint half sizes must be positive")

    def corners(self, pose: Pose2) -> np.ndarray:
        """World coordinates of the four corners, shape (4, 2)."""
        local = np.array(
            [
                [self.half_length, self.half_width],
                [self.half_length, -self.half_width],
                [-self.half_length, -self.half_width],
                [-self.half_length, self.half_width],
            ]
        )
        return pose.position + local @ pose.rotation().T


def point_box_distance(p, box: BoxObstacle, t: float = 0.0) -> float:
    """Signed distance from a point to the box boundary at time ``t``.

    Positive outside, negative inside (penetration depth), zero on the
    boundary. The signed value lets penetration depth proxy contact force.
    """
    q = np.abs(as_vec2(p) - box.center_at(t)) - box.half_extents
    outside = math.hypot(max(q[0], 0.0), max(q[1], 0.0))
    inside = min(max(q[0], q[1]), 0.0)
    return outside + inside


def points_box_distance(points: np.ndarray, box: BoxObstacle, t: float = 0.0) -> np.ndarray:
    """Vectorized ``point_box_distance`` for an (N, 2) array of points."""
    q = np.abs(points - box.center_at(t)) - box.half_extents
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def _segment_segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between two planar segments."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    b = float(d1 @ d2)
    c = float(d1 @ r)
    denom = a * e - b * b
    if denom > 1e-12 * max(a * e, 1e-30):
        s = min(max((b * f - c * e) / denom, 0.0), 1.0)
    else:
        s = 0.0
    tt = (b * s + f) / e if e > 0 else 0.0
    tt = min(max(tt, 0.0), 1.0)
    s = min(max((b * tt - c) / a, 0.0), 1.0) if a > 0 else 0.0
    closest1 = p1 + s * d1
    closest2 = q1 + tt * d2
    return float(np.linalg.norm(closest1 - closest2))


def segment_box_distance(a, b, box: BoxObstacle, t: float = 0.0) -> float:
    """Minimum signed distance from segment ab to the box at time ``t``.

    Equals min over points of the segment of ``point_box_distance``;
    negative iff the segment enters the box interior.
    """
    a = as_vec2(a)
    b = as_vec2(b)
    d = b - a
    seg_len = float(np.linalg.norm(d))
    if seg_len < 1e-12:
        return point_box_distance(a, box, t)

    c = box.center_at(t)
    h = box.half_extents

    # Clip the segment against the box slabs to find the interior chord.
    s0, s1 = 0.0, 1.0
    inside = True
    for k in range(2):
        if abs(d[k]) < 1e-15:
            if abs(a[k] - c[k]) > h[k]:
                inside = False
                break
        else:
            lo = (c[k] - h[k] - a[k]) / d[k]
            hi = (c[k] + h[k] - a[k]) / d[k]
            if lo > hi:
                lo, hi = hi, lo
            s0 = max(s0, lo)
            s1 = min(s1, hi)
            if s0 > s1:
                inside = False
                break

    if inside and s0 <= s1:
        # Interior SDF along the chord is convex piecewise linear in s;
        # its minimum sits at an endpoint or a kink/crossing breakpoint.
        candidates = [s0, s1]
        for k in range(2):
            if abs(d[k]) > 1e-15:
                candidates.append((c[k] - a[k]) / d[k])
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                num = sy * (a[1] - c[1]) - h[1] - sx * (a[0] - c[0]) + h[0]
                den = sx * d[0] - sy * d[1]
                if abs(den) > 1e-15:
                    candidates.append(num / den)
        best = math.inf
        for s in candidates:
            if s0 - 1e-12 <= s <= s1 + 1e-12:
                s = min(max(s, s0), s1)
                best = min(best, point_box_distance(a + s * d, box, t))
        return best

    # No overlap with the box footprint: distance to the nearest box edge.
    corners = [
        c + np.array([h[0], h[1]]),
        c + np.array([h[0], -h[1]]),
        c + np.array([-h[0], -h[1]]),
        c + np.array([-h[0], h[1]]),
    ]
    best = math.inf
    for i in range(4):
        best = min(best, _segment_segment_distance(a, b, corners[i], corners[(i + 1) % 4]))
    return best


def oriented_footprint_penetration(pose: Pose2, fp: Footprint, box: BoxObstacle, t: float = 0.0) -> float:
    """SAT penetration depth of the rotated footprint against the box.

    Returns 0 when separated; otherwise the minimum translation distance
    across the four candidate axes (two box axes, two body axes).
    """
    c = box.center_at(t)
    delta = pose.position - c
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    hl, hw = fp.half_length, fp.half_width
    bx, by = box.half_extents

    # Projection radii of each rectangle onto each axis; axes are unit.
    axes = (
        (1.0, 0.0, bx, abs(cy) * hl + abs(sy) * hw),
        (0.0, 1.0, by, abs(sy) * hl + abs(cy) * hw),
        (cy, sy, abs(cy) * bx + abs(sy) * by, hl),
        (-sy, cy, abs(sy) * bx + abs(cy) * by, hw),
    )
    min_overlap = math.inf
    for ax, ay, r_box, r_fp in axes:
        overlap = r_box + r_fp - abs(ax * delta[0] + ay * delta[1])
        if overlap <= 0.0:
            return 0.0
        min_overlap = min(min_overlap, overlap)
    return min_overlap


def oriented_footprint_collides(pose: Pose2, fp: Footprint, box: BoxObstacle, t: float = 0.0) -> bool:
    """True iff the rotated footprint rectangle overlaps the box (positive area)."""
    return oriented_footprint_penetration(pose, fp, box, t) > 0.0
