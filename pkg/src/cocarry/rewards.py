"""Reward and penalty terms for the carrying task, with a per-term breakdown.

All directional quantities are expressed in the object frame. Weights and
thresholds default to the shipped parameter set; note that the default w1/w2
are negative, so the tracking and alignment terms act as shaped penalties
that vanish at the optimum. Flip the signs in :class:`RewardConfig` to use
them as positive rewards instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .geometry import Pose2, point_box_distance
from .terrain import Terrain


@dataclass
class RewardConfig:
    w1: float = -0.5  # command tracking
    w2: float = -0.5  # object alignment to command
    w3: float = -7.5  # obstacle proximity
    w4: float = -0.2  # internal forces along the bar
    w5: float = -2.5  # undesired contacts
    w6: float = -0.1  # standing in place
    w7: float = -0.001  # object acceleration
    w8: float = -0.0005  # action rate
    w9: float = -0.1  # base yaw rates
    alpha: float = 10.0  # 1/m, obstacle penalty falloff
    beta: float = 15.0  # 1/m, stand penalty falloff
    d_s_base: float = 0.6  # safety radius of the agent base frames (m)
    d_s_obj: float = 0.2  # safety radius of the object frame (m)
    delta: float = 2.0  # obstacle penalty activation distance (m)
    tau: float = 0.15  # stand displacement threshold (m)
    t_stand: int = 10  # history length (high-level steps)
    contact_force_threshold: float = 1.0
    k_pen: float = 1000.0  # contact force per meter of penetration
    eps_v: float = 1e-3  # rest guard for velocity normalization (m/s)

    def __post_init__(self):
        if self.delta <= max(self.d_s_base, self.d_s_obj):
            raise ValueError("delta must exceed the safety radii")
        if self.t_stand < 1:
            raise ValueError("t_stand must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown reward config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RewardConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class RewardBreakdown:
    """Per-term values for one high-level step; ``total`` is their exact sum."""

    r_track: float = 0.0
    r_align: float = 0.0
    p_dist_obj: float = 0.0
    p_dist_base1: float = 0.0
    p_dist_base2: float = 0.0
    p_intforces: float = 0.0
    p_contacts: float = 0.0
    p_stand: float = 0.0
    p_obj_acc: float = 0.0
    p_a_rate: float = 0.0
    p_ang_vel: float = 0.0

    TERMS = (
        "r_track",
        "r_align",
        "p_dist_obj",
        "p_dist_base1",
        "p_dist_base2",
        "p_intforces",
        "p_contacts",
        "p_stand",
        "p_obj_acc",
        "p_a_rate",
        "p_ang_vel",
    )

    @property
    def total(self) -> float:
        return sum(getattr(self, name) for name in self.TERMS)

    def as_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.TERMS}
        d["total"] = self.total
        return d


def tracking_reward(cmd: np.ndarray, v_obj_xy: np.ndarray, cfg: RewardConfig) -> float:
    """w1 times the cosine between the command and the object velocity.

    Zero below the rest guard ``eps_v``, where the normalization is undefined.
    """
    speed = float(np.linalg.norm(v_obj_xy))
    if speed <= cfg.eps_v:
        return 0.0
    return cfg.w1 * float(np.dot(cmd, v_obj_xy)) / speed


def alignment_reward(cmd_in_object: np.ndarray, cfg: RewardConfig) -> float:
    """w2 * (|atan2(c_y, c_x)| - pi/2)^2: zero when the command runs along
    the object y-axis (the bar pointing into the motion direction)."""
    angle = math.atan2(cmd_in_object[1], cmd_in_object[0])
    return cfg.w2 * (abs(angle) - math.pi / 2) ** 2


def obstacle_penalty(d_min: float, d_s: float, cfg: RewardConfig) -> float:
    """Exponential proximity penalty, active only below the threshold delta."""
    if d_min >= cfg.delta:
        return 0.0
    return cfg.w3 * math.exp(-cfg.alpha * (d_min - d_s))


def internal_force_penalty(action: np.ndarray, cfg: RewardConfig) -> float:
    """Penalizes opposing y-velocity commands, which stress the bar.

    Action layout is [vx1, vy1, wz1, vx2, vy2, wz2]; the relevant pair is
    the two object-frame y commands.
    """
    return cfg.w4 * math.exp(abs(float(action[1]) - float(action[4])) - 1.0)


def contact_penalty(penetrations, cfg: RewardConfig) -> float:
    """Sum of proxy contact forces above the reporting threshold, weighted.

    Force per body is k_pen times its penetration depth; forces at or below
    the threshold are ignored.
    """
    total = 0.0
    for pen in penetrations:
        force = cfg.k_pen * float(pen)
        if force > cfg.contact_force_threshold:
            total += force
    return cfg.w5 * total


def stand_penalty(history: np.ndarray, cfg: RewardConfig) -> float:
    """Penalty for keeping the object nearly still over the history window.

    ``history`` holds the last t_stand + 1 object positions. The cumulative
    per-axis displacements must both stay under tau for the penalty to fire.
    """
    history = np.asarray(history, dtype=float)
    if history.shape != (cfg.t_stand + 1, 2):
        raise ValueError(f"history must have shape ({cfg.t_stand + 1}, 2)")
    increments = np.abs(np.diff(history, axis=0))
    delta_x = float(increments[:, 0].sum())
    delta_y = float(increments[:, 1].sum())
    if delta_x < cfg.tau and delta_y < cfg.tau:
        return cfg.w6 * math.exp(-cfg.beta * math.hypot(delta_x, delta_y))
    return 0.0


def regularizers(
    v_obj_prev: np.ndarray,
    v_obj: np.ndarray,
    dt: float,
    action_prev: np.ndarray,
    action: np.ndarray,
    omega_base1: float,
    omega_base2: float,
    cfg: RewardConfig,
) -> tuple[float, float, float]:
    """Object acceleration, action rate, and base yaw-rate penalties."""
    acc = (np.asarray(v_obj, dtype=float) - np.asarray(v_obj_prev, dtype=float)) / dt
    p_obj_acc = cfg.w7 * float(acc @ acc)
    p_a_rate = cfg.w8 * float(np.linalg.norm(np.asarray(action_prev) - np.asarray(action)))
    p_ang_vel = cfg.w9 * (omega_base1**2 + omega_base2**2)
    return p_obj_acc, p_a_rate, p_ang_vel


def min_obstacle_distances(
    object_pos: np.ndarray,
    base1_pos: np.ndarray,
    base2_pos: np.ndarray,
    terrain: Terrain,
    t: float = 0.0,
) -> tuple[float, float, float]:
    """Planar distance from each system frame origin to its nearest obstacle."""
    dists = []
    for p in (object_pos, base1_pos, base2_pos):
        best = math.inf
        for box in terrain.obstacles:
            best = min(best, point_box_distance(p, box, t))
        dists.append(best)
    return dists[0], dists[1], dists[2]


def step_reward(
    cmd: np.ndarray | None,
    object_pose: Pose2,
    object_velocity: np.ndarray,
    prev_object_velocity: np.ndarray,
    base1_pos: np.ndarray,
    base2_pos: np.ndarray,
    omega_base1: float,
    omega_base2: float,
    action: np.ndarray,
    prev_action: np.ndarray,
    penetrations,
    history: np.ndarray,
    terrain: Terrain,
    dt: float,
    t: float,
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Assemble the full per-step breakdown.

    ``object_velocity`` is the (vx, vy, wz) triple in world axes; the linear
    part is rotated into the object frame before the tracking term. ``cmd``
    is the unit command already expressed in the object frame (None once the
    path is complete, which zeroes the command-dependent terms).
    """
    rot_t = object_pose.rotation().T
    v_obj_local = rot_t @ np.asarray(object_velocity[:2], dtype=float)

    out = RewardBreakdown()
    if cmd is not None:
        out.r_track = tracking_reward(np.asarray(cmd, dtype=float), v_obj_local, cfg)
        out.r_align = alignment_reward(np.asarray(cmd, dtype=float), cfg)

    d_obj, d_b1, d_b2 = min_obstacle_distances(object_pose.position, base1_pos, base2_pos, terrain, t)
    out.p_dist_obj = obstacle_penalty(d_obj, cfg.d_s_obj, cfg)
    out.p_dist_base1 = obstacle_penalty(d_b1, cfg.d_s_base, cfg)
    out.p_dist_base2 = obstacle_penalty(d_b2, cfg.d_s_base, cfg)

    out.p_intforces = internal_force_penalty(action, cfg)
    out.p_contacts = contact_penalty(penetrations, cfg)
    out.p_stand = stand_penalty(history, cfg)
    out.p_obj_acc, out.p_a_rate, out.p_ang_vel = regularizers(
        prev_object_velocity, object_velocity, dt, prev_action, action,
        omega_base1, omega_base2, cfg,
    )
    return out
