"""Kinematic two-agent-plus-bar simulator.

The low-level locomotion controllers are abstracted as first-order velocity
trackers: each agent's realized base velocity lags its commanded velocity
with time constant tau_v and saturates at the configured limits. After every
integration substep the agent positions are projected symmetrically back
onto the bar-length constraint, which preserves the midpoint and restores
the inter-agent distance exactly.

Frames: the object frame sits at the bar midpoint, its y-axis is the unit
vector from agent1 to agent2 and its x-axis is forward (right-hand rule).
Tilt/fall terminations cannot occur in a planar kinematic model; the proxy
used here terminates when a body stays deeply penetrated into an obstacle
for a sustained interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BoxObstacle,
    Footprint,
    Pose2,
    oriented_footprint_penetration,
    rot2,
    segment_box_distance,
    wrap_angle,
)
from .terrain import Terrain
from .waypoints import PathAssignment

BODY_AGENT1 = "agent1"
BODY_AGENT2 = "agent2"
BODY_BAR = "bar"

TERM_GOAL = "goal"
TERM_TIMEOUT = "timeout"
TERM_TILT = "tilt-proxy"
TERM_HEIGHT = "height-proxy"


class DegenerateFrameError(ValueError):
    """Agents co-located: the object frame is undefined."""


class StartCollisionError(ValueError):
    """Reset rejected because the start placement is in collision."""


@dataclass
class SimConfig:
    dt: float = 0.05  # high-level control period (20 Hz)
    substep: float = 0.01  # internal integration step
    tau_v: float = 0.3  # velocity tracking time constant; 0 = exact tracking
    v_max: float = 0.8  # linear speed saturation (m/s); also the action bound
    omega_max: float = 0.8  # yaw rate saturation (rad/s)
    footprint: Footprint = field(default_factory=Footprint)
    r_wp: float = 0.5  # waypoint acceptance radius (m)
    max_time: float = 70.0  # episode wall limit (s)
    deep_penetration: float = 0.25  # proxy threshold (m)
    deep_duration: float = 1.0  # sustained time before the proxy fires (s)
    history_len: int = 11  # object positions kept for the stand penalty


@dataclass
class AgentState:
    pose: Pose2
    velocity: np.ndarray  # realized (vx, vy, yaw rate), world axes
    command_base: np.ndarray  # commanded (vx, vy, wz) in the base frame
    lag_velocity: np.ndarray  # internal tracker state, world axes

    def copy(self) -> "AgentState":
        return AgentState(
            self.pose.copy(),
            self.velocity.copy(),
            self.command_base.copy(),
            self.lag_velocity.copy(),
        )


@dataclass
class SystemState:
    agent1: AgentState
    agent2: AgentState
    bar_length: float
    time: float
    object_pose: Pose2
    object_velocity: np.ndarray  # (vx, vy, wz), world axes
    history: np.ndarray  # (history_len, 2) recent object positions
    deep_contact_time: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "SystemState":
        return SystemState(
            self.agent1.copy(),
            self.agent2.copy(),
            self.bar_length,
            self.time,
            self.object_pose.copy(),
            self.object_velocity.copy(),
            self.history.copy(),
            self.deep_contact_time.copy(),
        )

    def relative_yaws(self) -> tuple[float, float]:
        """Object-minus-base yaw for each agent, wrapped to (-pi, pi]."""
        return (
            wrap_angle(self.object_pose.yaw - self.agent1.pose.yaw),
            wrap_angle(self.object_pose.yaw - self.agent2.pose.yaw),
        )


@dataclass
class StepOutcome:
    state: SystemState
    contacts: list[tuple[str, float]]
    terminated: str | None
    clamped: int = 0  # action components clipped to the bounds


def object_frame_from_agents(p1: np.ndarray, p2: np.ndarray) -> Pose2:
    """Object pose from agent positions: midpoint, y-axis from agent1 to agent2."""
    d = p2 - p1
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        raise DegenerateFrameError("agents are co-located")
    yaw = math.atan2(d[1], d[0]) - math.pi / 2
    return Pose2((p1 + p2) / 2, yaw)


def object_kinematics(
    a1: AgentState, a2: AgentState, printed_form: bool = False
) -> tuple[np.ndarray, np.ndarray, float]:
    """Object position, planar velocity, and yaw rate from the agent states.

    The default yaw rate is the planar rigid-body form: the relative base
    velocity projected on the bar's perpendicular, divided by the bar length.
    ``printed_form`` instead projects on the perpendicular of the object
    *position* vector, which is degenerate near the world origin; it exists
    only for comparison.
    """
    p1, p2 = a1.pose.position, a2.pose.position
    d = p2 - p1
    length = float(np.linalg.norm(d))
    if length < 1e-9:
        raise DegenerateFrameError("agents are co-located")
    r_obj = (p1 + p2) / 2
    v_obj = (a1.velocity[:2] + a2.velocity[:2]) / 2
    dv = a2.velocity[:2] - a1.velocity[:2]
    if printed_form:
        r_norm = float(np.linalg.norm(r_obj))
        if r_norm < 1e-12:
            raise DegenerateFrameError("printed form undefined at the world origin")
        perp = np.array([-r_obj[1], r_obj[0]]) / r_norm
        omega = float(dv @ perp) / r_norm
    else:
        u = d / length
        perp = np.array([-u[1], u[0]])
        omega = float(dv @ perp) / length
    return r_obj, v_obj, omega


def body_penetrations(
    state: SystemState, terrain: Terrain, t: float, footprint: Footprint
) -> list[tuple[str, float]]:
    """Deepest penetration of each body (agent footprints, bar segment)."""
    obstacles = terrain.obstacles
    pen1 = pen2 = pen_bar = 0.0
    p1 = state.agent1.pose.position
    p2 = state.agent2.pose.position
    for box in obstacles:
        pen1 = max(pen1, oriented_footprint_penetration(state.agent1.pose, footprint, box, t))
        pen2 = max(pen2, oriented_footprint_penetration(state.agent2.pose, footprint, box, t))
        pen_bar = max(pen_bar, -min(segment_box_distance(p1, p2, box, t), 0.0))
    return [(BODY_AGENT1, pen1), (BODY_AGENT2, pen2), (BODY_BAR, pen_bar)]


def reset(
    terrain: Terrain,
    start_pose: Pose2,
    bar_length: float = 2.0,
    cfg: SimConfig | None = None,
) -> SystemState:
    """Place the system at rest with agents at +-L/2 along the object y-axis.

    Both agent x-axes start aligned with the object x-axis. Raises
    :class:`StartCollisionError` when either footprint or the bar overlaps
    an obstacle.
    """
    cfg = cfg or SimConfig()
    y_axis = rot2(start_pose.yaw) @ np.array([0.0, 1.0])
    p1 = start_pose.position - bar_length / 2 * y_axis
    p2 = start_pose.position + bar_length / 2 * y_axis

    def agent(pos: np.ndarray) -> AgentState:
        return AgentState(
            pose=Pose2(pos, start_pose.yaw),
            velocity=np.zeros(3),
            command_base=np.zeros(3),
            lag_velocity=np.zeros(3),
        )

    state = SystemState(
        agent1=agent(p1),
        agent2=agent(p2),
        bar_length=bar_length,
        time=0.0,
        object_pose=start_pose.copy(),
        object_velocity=np.zeros(3),
        history=np.tile(start_pose.position, (cfg.history_len, 1)),
    )
    for body, pen in body_penetrations(state, terrain, 0.0, cfg.footprint):
        if pen > 0.0:
            raise StartCollisionError(f"start placement collides ({body}, {pen:.3f} m deep)")
    return state


def _saturate(v: np.ndarray, v_max: float, omega_max: float) -> np.ndarray:
    out = v.copy()
    speed = math.hypot(out[0], out[1])
    if speed > v_max:
        out[:2] *= v_max / speed
    out[2] = min(max(out[2], -omega_max), omega_max)
    return out


def step(
    state: SystemState,
    action: np.ndarray,
    terrain: Terrain,
    cfg: SimConfig | None = None,
    path: PathAssignment | None = None,
) -> StepOutcome:
    """Advance one high-level control period. Does not mutate ``state``.

    ``action`` is [vx1, vy1, wz1, vx2, vy2, wz2], desired base velocities in
    the object frame; components outside [-v_max, v_max] are clamped and
    counted. The object-frame command is rotated into each base frame once
    at the start of the period (the rotated low-level command) and then
    tracked in the rotating base frame across substeps.
    """
    cfg = cfg or SimConfig()
    action = np.asarray(action, dtype=float)
    if action.shape != (6,):
        raise ValueError("action must be a 6-vector")
    clipped = np.clip(action, -cfg.v_max, cfg.v_max)
    clamped = int(np.count_nonzero(clipped != action))

    new = state.copy()
    obj_yaw = new.object_pose.yaw
    agents = (new.agent1, new.agent2)
    for idx, agent in enumerate(agents):
        a = clipped[3 * idx : 3 * idx + 3]
        psi = wrap_angle(agent.pose.yaw - obj_yaw)
        cmd = np.empty(3)
        cmd[:2] = rot2(psi).T @ a[:2]
        cmd[2] = a[2]
        agent.command_base = cmd

    n_sub = max(1, round(cfg.dt / cfg.substep))
    h = cfg.dt / n_sub
    decay = 1.0 if cfg.tau_v <= 1e-9 else 1.0 - math.exp(-h / cfg.tau_v)

    for _ in range(n_sub):
        old_pos = (agents[0].pose.position.copy(), agents[1].pose.position.copy())
        for agent in agents:
            target = np.empty(3)
            target[:2] = rot2(agent.pose.yaw) @ agent.command_base[:2]
            target[2] = agent.command_base[2]
            target = _saturate(target, cfg.v_max, cfg.omega_max)
            agent.lag_velocity = agent.lag_velocity + decay * (target - agent.lag_velocity)
            agent.lag_velocity = _saturate(agent.lag_velocity, cfg.v_max, cfg.omega_max)
            agent.pose.position = agent.pose.position + agent.lag_velocity[:2] * h
            agent.pose.yaw = wrap_angle(agent.pose.yaw + agent.lag_velocity[2] * h)

        # Symmetric projection back onto the bar constraint.
        d = agents[1].pose.position - agents[0].pose.position
        dist = float(np.linalg.norm(d))
        if dist < 1e-9:
            raise DegenerateFrameError("agents collapsed onto each other")
        u = d / dist
        corr = 0.5 * (dist - new.bar_length)
        agents[0].pose.position = agents[0].pose.position + corr * u
        agents[1].pose.position = agents[1].pose.position - corr * u

        for k, agent in enumerate(agents):
            agent.velocity = np.array(
                [
                    (agent.pose.position[0] - old_pos[k][0]) / h,
                    (agent.pose.position[1] - old_pos[k][1]) / h,
                    agent.lag_velocity[2],
                ]
            )

    r_obj, v_obj, omega = object_kinematics(new.agent1, new.agent2)
    yaw = object_frame_from_agents(new.agent1.pose.position, new.agent2.pose.position).yaw
    new.object_pose = Pose2(r_obj, yaw)
    new.object_velocity = np.array([v_obj[0], v_obj[1], omega])
    new.time = state.time + cfg.dt
    new.history = np.vstack([new.history[1:], r_obj[None, :]])

    contacts = body_penetrations(new, terrain, new.time, cfg.footprint)
    pens = np.array([pen for _, pen in contacts])
    deep = pens > cfg.deep_penetration
    new.deep_contact_time = np.where(deep, new.deep_contact_time + cfg.dt, 0.0)

    terminated = check_termination(new, terrain, path, cfg)
    return StepOutcome(state=new, contacts=contacts, terminated=terminated, clamped=clamped)


def check_termination(
    state: SystemState,
    terrain: Terrain,
    path: PathAssignment | None,
    cfg: SimConfig | None = None,
) -> str | None:
    """Evaluate the episode-ending conditions, most specific first.

    Goal: the final waypoint lies within the acceptance radius. Tilt/height
    proxies: an agent body or the bar stayed deeply penetrated for the
    configured duration. Timeout: the episode wall clock ran out.
    """
    cfg = cfg or SimConfig()
    if path is not None and len(path.waypoints) > 0:
        final = path.waypoints[-1]
        if path.completed or np.linalg.norm(final - state.object_pose.position) <= cfg.r_wp:
            return TERM_GOAL
    sustained = state.deep_contact_time >= cfg.deep_duration - 1e-9
    if sustained[0] or sustained[1]:
        return TERM_TILT
    if sustained[2]:
        return TERM_HEIGHT
    if state.time >= cfg.max_time - 1e-9:
        return TERM_TIMEOUT
    return None
