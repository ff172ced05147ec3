"""Episode loop around the simulator: observations, action bounding, rewards.

The observation is a fixed-layout vector: 19 proprioceptive entries followed
by the flattened fused height map (row-major). Proprio layout:

    [0:3]   object velocity in the object frame (vx, vy, wz)
    [3:5]   unit command direction in the object frame
    [5:11]  last bounded action
    [11:14] agent1 base velocity in the object frame
    [14:17] agent2 base velocity in the object frame
    [17:19] relative yaws (object - base1, object - base2)

Raw controller outputs pass through a scaled tanh, so actions stay strictly
inside the velocity bounds. A heuristic tracking controller is included to
exercise the full stack end to end; it is a hand-tuned stand-in, not a
learned policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .elevation import (
    POLICY_COLS,
    POLICY_RESOLUTION,
    POLICY_ROWS,
    HeightMap,
    SenseConfig,
    augment,
    fuse,
    max_filter,
    sense,
)
from .geometry import Pose2, wrap_angle
from .rewards import RewardBreakdown, RewardConfig, step_reward
from .simulator import SimConfig, SystemState, TERM_GOAL, TERM_TIMEOUT, reset, step
from .terrain import Terrain
from .waypoints import CurriculumState, PathAssignment, command, update_curriculum

PROPRIO_DIM = 19


@dataclass
class Observation:
    proprio: np.ndarray  # (19,)
    height_map: HeightMap  # fused policy map

    def vector(self) -> np.ndarray:
        """Flat observation: proprio followed by the row-major map."""
        return np.concatenate([self.proprio, self.height_map.heights.ravel()])


@dataclass
class LocalObservation:
    """Per-agent slice of the full observation for decentralized execution."""

    object_velocity: np.ndarray  # (3,)
    command: np.ndarray  # (2,)
    own_velocity: np.ndarray  # (3,)
    own_relative_yaw: float
    map_half: np.ndarray  # (rows, cols // 2)


@dataclass
class EpisodeConfig:
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    sense: SenseConfig = field(default_factory=SenseConfig)
    bar_length: float = 2.0
    map_rows: int = POLICY_ROWS
    map_cols: int = POLICY_COLS
    map_resolution: float = POLICY_RESOLUTION
    start_pose: Pose2 | None = None  # default: at path.start facing the first waypoint
    start_jitter: float = 0.0  # uniform +-jitter on the start position (m)
    augment_maps: bool = False
    noise_std: float = 0.02
    artifact_prob: float = 0.01
    relative_heights: bool = False  # subtract the ground height under the object

    @property
    def max_steps(self) -> int:
        return int(round(self.sim.max_time / self.sim.dt))


def bound_action(raw: np.ndarray, v_max: float = 0.8) -> np.ndarray:
    """Componentwise scaled tanh: identity-like near zero, saturating at v_max."""
    raw = np.asarray(raw, dtype=float)
    return v_max * np.tanh(raw / v_max)


def observe(
    state: SystemState,
    cmd: np.ndarray,
    last_action: np.ndarray,
    fused_map: HeightMap,
    rows: int = POLICY_ROWS,
    cols: int = POLICY_COLS,
) -> Observation:
    """Assemble the fixed-layout observation from the current state."""
    if fused_map.heights.shape != (rows, cols):
        raise ValueError(
            f"fused map is {fused_map.heights.shape}, expected {(rows, cols)}"
        )
    rot_t = state.object_pose.rotation().T
    psi1, psi2 = state.relative_yaws()

    proprio = np.empty(PROPRIO_DIM)
    proprio[0:2] = rot_t @ state.object_velocity[:2]
    proprio[2] = state.object_velocity[2]
    proprio[3:5] = cmd
    proprio[5:11] = last_action
    proprio[11:13] = rot_t @ state.agent1.velocity[:2]
    proprio[13] = state.agent1.velocity[2]
    proprio[14:16] = rot_t @ state.agent2.velocity[:2]
    proprio[16] = state.agent2.velocity[2]
    proprio[17] = psi1
    proprio[18] = psi2
    return Observation(proprio=proprio, height_map=fused_map)


def split_observation(obs: Observation) -> tuple[LocalObservation, LocalObservation]:
    """Partition the full observation into the two agents' local views.

    The map splits along the object y-axis: agent1 (the -y side) gets the
    lower column half, agent2 the upper; concatenating the halves along the
    column axis reproduces the full grid.
    """
    p = obs.proprio
    cols = obs.height_map.cols
    half = cols // 2
    grid = obs.height_map.heights
    local1 = LocalObservation(
        object_velocity=p[0:3].copy(),
        command=p[3:5].copy(),
        own_velocity=p[11:14].copy(),
        own_relative_yaw=float(p[17]),
        map_half=grid[:, :half].copy(),
    )
    local2 = LocalObservation(
        object_velocity=p[0:3].copy(),
        command=p[3:5].copy(),
        own_velocity=p[14:17].copy(),
        own_relative_yaw=float(p[18]),
        map_half=grid[:, half:].copy(),
    )
    return local1, local2


@dataclass
class TrackerConfig:
    speed: float = 0.6  # cruise speed along the command (m/s)
    repulsion_gain: float = 0.25
    influence_radius: float = 2.5  # cells beyond this do not repel (m)
    height_cutoff: float = 0.3  # cells above this height repel (m)
    yaw_gain: float = 1.5
    max_repulsion: float = 0.45  # cap on the repulsive velocity (m/s)
    bar_length: float = 2.0


class HeuristicTracker:
    """Potential-field stand-in for the trained policy.

    Drives both agents along the commanded direction, adds a per-agent
    repulsive velocity away from nearby high map cells, and rotates the bar
    so the object y-axis lines up with the command (single-file travel, the
    configuration the alignment term favors).
    """

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()

    def __call__(self, obs: Observation) -> np.ndarray:
        cfg = self.cfg
        cmd = obs.proprio[3:5]
        m = obs.height_map
        cells = m.cell_centers_local().reshape(-1, 2)
        high = (m.heights.ravel() > cfg.height_cutoff) & m.valid.ravel()
        high_cells = cells[high]

        # Fold the command angle to the nearest of +-pi/2: either bar end may lead.
        err = wrap_angle(math.atan2(cmd[1], cmd[0]) - math.pi / 2)
        if err > math.pi / 2:
            err -= math.pi
        elif err <= -math.pi / 2:
            err += math.pi
        omega = min(max(cfg.yaw_gain * err, -0.8), 0.8)

        action = np.empty(6)
        for idx, sign in enumerate((-1.0, 1.0)):
            agent_pos = np.array([0.0, sign * cfg.bar_length / 2])
            rep = np.zeros(2)
            if len(high_cells):
                diff = agent_pos - high_cells
                dist = np.linalg.norm(diff, axis=1)
                near = (dist > 1e-6) & (dist < cfg.influence_radius)
                if near.any():
                    rep = cfg.repulsion_gain * np.sum(
                        diff[near] / dist[near, None] ** 3, axis=0
                    )
                    norm = float(np.linalg.norm(rep))
                    if norm > cfg.max_repulsion:
                        rep *= cfg.max_repulsion / norm
            v = cfg.speed * cmd + rep
            v[0] -= sign * omega * cfg.bar_length / 2  # differential term turns the bar
            action[3 * idx : 3 * idx + 2] = v
            action[3 * idx + 2] = omega
        return action


@dataclass
class EpisodeOutcome:
    termination: str
    steps: int
    time: float
    total_reward: float
    reached_fraction: float
    length_agent1: float
    length_agent2: float
    length_object: float
    max_penetration: float
    curriculum: CurriculumState | None = None


class CarryEnv:
    """Step/reset environment around one terrain and path assignment.

    ``reset()`` returns the first :class:`Observation`; ``step(raw_action)``
    returns (observation, reward, done, info). The raw action is tanh-bounded
    before reaching the simulator, so any real-valued 6-vector is legal.
    info carries the reward breakdown, contacts, and the termination reason.
    """

    def __init__(self, terrain: Terrain, path: PathAssignment, cfg: EpisodeConfig | None = None):
        self.terrain = terrain
        self.base_path = path
        self.cfg = cfg or EpisodeConfig()
        self.path: PathAssignment | None = None
        self.state: SystemState | None = None
        self._rng = None
        self._last_action = np.zeros(6)
        self._prev_velocity = np.zeros(3)
        self._cmd = np.zeros(2)
        self.steps = 0

    def _fused_map(self) -> HeightMap:
        t = self.state.time
        maps = []
        for agent in (self.state.agent1, self.state.agent2):
            m = max_filter(sense(self.terrain, agent.pose, t, self.cfg.sense))
            if self.cfg.augment_maps:
                m = augment(
                    m,
                    seed=int(self._rng.integers(2**31)),
                    noise_std=self.cfg.noise_std,
                    artifact_prob=self.cfg.artifact_prob,
                )
            maps.append(m)
        fused = fuse(
            maps[0],
            maps[1],
            self.state.object_pose,
            self.cfg.map_rows,
            self.cfg.map_cols,
            self.cfg.map_resolution,
        )
        if self.cfg.relative_heights:
            offset = self.terrain.height_at(self.state.object_pose.position, t)
            fused.heights = np.where(fused.valid, fused.heights - offset, fused.heights)
        return fused

    def reset(self) -> Observation:
        cfg = self.cfg
        self._rng = np.random.default_rng(cfg.seed)
        self.path = replace(self.base_path, next_index=0, reached_fraction=0.0)

        if cfg.start_pose is not None:
            start = cfg.start_pose.copy()
        else:
            to_first = self.base_path.waypoints[0] - self.base_path.start
            yaw = math.atan2(to_first[1], to_first[0])
            start = Pose2(self.base_path.start.copy(), yaw)
        if cfg.start_jitter > 0:
            start = Pose2(
                start.position + self._rng.uniform(-cfg.start_jitter, cfg.start_jitter, 2),
                start.yaw + self._rng.uniform(-cfg.start_jitter, cfg.start_jitter),
            )

        self.state = reset(self.terrain, start, cfg.bar_length, cfg.sim)
        self._last_action = np.zeros(6)
        self._prev_velocity = np.zeros(3)
        self.steps = 0
        cmd = command(self.state.object_pose, self.path, cfg.sim.r_wp)
        self._cmd = np.zeros(2) if cmd is None else cmd
        return observe(
            self.state, self._cmd, self._last_action, self._fused_map(),
            cfg.map_rows, cfg.map_cols,
        )

    def step(self, raw_action: np.ndarray):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.cfg
        action = bound_action(raw_action, cfg.sim.v_max)
        outcome = step(self.state, action, self.terrain, cfg.sim, path=self.path)
        new_state = outcome.state

        breakdown = step_reward(
            cmd=self._cmd,
            object_pose=new_state.object_pose,
            object_velocity=new_state.object_velocity,
            prev_object_velocity=self._prev_velocity,
            base1_pos=new_state.agent1.pose.position,
            base2_pos=new_state.agent2.pose.position,
            omega_base1=float(new_state.agent1.velocity[2]),
            omega_base2=float(new_state.agent2.velocity[2]),
            action=action,
            prev_action=self._last_action,
            penetrations=[pen for _, pen in outcome.contacts],
            history=new_state.history[-(cfg.reward.t_stand + 1):],
            terrain=self.terrain,
            dt=cfg.sim.dt,
            t=new_state.time,
            cfg=cfg.reward,
        )

        self.state = new_state
        self._prev_velocity = new_state.object_velocity.copy()
        self._last_action = action
        self.steps += 1

        cmd = command(new_state.object_pose, self.path, cfg.sim.r_wp)
        self._cmd = np.zeros(2) if cmd is None else cmd
        done = outcome.terminated is not None or self.steps >= cfg.max_steps
        termination = outcome.terminated
        if done and termination is None:
            termination = TERM_TIMEOUT
        obs = observe(
            new_state, self._cmd, self._last_action, self._fused_map(),
            cfg.map_rows, cfg.map_cols,
        )
        info = {
            "breakdown": breakdown,
            "contacts": outcome.contacts,
            "termination": termination if done else None,
            "clamped": outcome.clamped,
            "time": new_state.time,
        }
        return obs, breakdown.total, done, info


def run_episode(
    terrain: Terrain,
    path: PathAssignment,
    controller,
    cfg: EpisodeConfig | None = None,
    curriculum: CurriculumState | None = None,
) -> tuple[EpisodeOutcome, list[dict]]:
    """Run one full episode and return its outcome plus the trajectory log.

    The controller maps an :class:`Observation` to a raw 6-vector action.
    One trajectory record is appended per high-level step. When a curriculum
    state is supplied, the promotion rule is applied once at episode end with
    the episode seed.
    """
    cfg = cfg or EpisodeConfig()
    env = CarryEnv(terrain, path, cfg)
    obs = env.reset()

    records: list[dict] = []
    total_reward = 0.0
    max_pen = 0.0
    lengths = np.zeros(3)
    prev_pts = _frame_points(env.state)
    termination = TERM_TIMEOUT

    for _ in range(cfg.max_steps):
        raw = controller(obs)
        cmd_before = env._cmd.copy()
        obs, reward, done, info = env.step(raw)
        total_reward += reward
        pts = _frame_points(env.state)
        lengths += np.linalg.norm(pts - prev_pts, axis=1)
        prev_pts = pts
        pen = max(pen for _, pen in info["contacts"])
        max_pen = max(max_pen, pen)
        records.append(_record(env, cmd_before, info))
        if done:
            termination = info["termination"]
            break

    new_curriculum = None
    if curriculum is not None:
        new_curriculum = update_curriculum(
            curriculum, env.path.reached_fraction, np.random.default_rng(cfg.seed)
        )

    outcome = EpisodeOutcome(
        termination=termination,
        steps=env.steps,
        time=env.state.time,
        total_reward=total_reward,
        reached_fraction=env.path.reached_fraction,
        length_agent1=float(lengths[1]),
        length_agent2=float(lengths[2]),
        length_object=float(lengths[0]),
        max_penetration=max_pen,
        curriculum=new_curriculum,
    )
    return outcome, records


def _frame_points(state: SystemState) -> np.ndarray:
    return np.array(
        [
            state.object_pose.position,
            state.agent1.pose.position,
            state.agent2.pose.position,
        ]
    )


def _record(env: CarryEnv, cmd: np.ndarray, info: dict) -> dict:
    s = env.state
    breakdown: RewardBreakdown = info["breakdown"]
    rec = {
        "time": s.time,
        "cmd_x": float(cmd[0]),
        "cmd_y": float(cmd[1]),
    }
    for name, agent in (("agent1", s.agent1), ("agent2", s.agent2)):
        rec[f"{name}_x"] = float(agent.pose.position[0])
        rec[f"{name}_y"] = float(agent.pose.position[1])
        rec[f"{name}_yaw"] = float(agent.pose.yaw)
        rec[f"{name}_vx"] = float(agent.velocity[0])
        rec[f"{name}_vy"] = float(agent.velocity[1])
        rec[f"{name}_wz"] = float(agent.velocity[2])
    rec["obj_x"] = float(s.object_pose.position[0])
    rec["obj_y"] = float(s.object_pose.position[1])
    rec["obj_yaw"] = float(s.object_pose.yaw)
    rec["obj_vx"] = float(s.object_velocity[0])
    rec["obj_vy"] = float(s.object_velocity[1])
    rec["obj_wz"] = float(s.object_velocity[2])
    for i, val in enumerate(env._last_action):
        rec[f"action_{i}"] = float(val)
    for name, pen in info["contacts"]:
        rec[f"pen_{name}"] = float(pen)
    rec.update({f"reward_{k}": float(v) for k, v in breakdown.as_dict().items()})
    return rec
