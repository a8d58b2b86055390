"""Episode-level API over the simulation kernels.

Observation layout (27): joint angles (5), joint velocities (5), desired
targets (5), torso roll/pitch/yaw (3, roll and yaw zero in the sagittal
plane), torso angular velocity (3, same convention), normalized head height
(1), previous action (5).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernel
from .robot import RobotModel

CONTROL_DT = kernel.CONTROL_DT
OBS_DIM = kernel.OBS_DIM
ACT_DIM = kernel.ACT_DIM

DONE_REASONS = {
    kernel.DONE_RUNNING: "running",
    kernel.DONE_TIME: "time_limit",
    kernel.DONE_TILT: "tilt_limit",
    kernel.DONE_ANGVEL: "angvel_limit",
    kernel.DONE_BLOWUP: "numerical_blowup",
}

SETTLE_TIME = 0.5         # minimum passive settling before control starts
SETTLE_TIME_MAX = 3.0     # give slow poses longer to come to rest
SETTLE_QUIET_LIN = 0.03   # m/s
SETTLE_QUIET_ANG = 0.3    # rad/s
RESET_CLEARANCE = 0.002


@dataclass(frozen=True)
class SimSettings:
    """Episode-level simulator settings (termination rules, length)."""

    max_time: float = 10.0
    tilt_limit_deg: float = 135.0
    angvel_limit_deg: float = 400.0  # the strict 25 deg/s variant is config

    @property
    def max_steps(self) -> int:
        return int(round(self.max_time / CONTROL_DT))

    @property
    def tilt_limit_rad(self) -> float:
        return math.radians(self.tilt_limit_deg)

    @property
    def angvel_limit_rad(self) -> float:
        return math.radians(self.angvel_limit_deg)


DEFAULT_SETTINGS = SimSettings()


@dataclass(frozen=True)
class SimState:
    q: np.ndarray           # x, z, pitch, five joint angles
    qd: np.ndarray
    q_desired: np.ndarray   # five joint targets (rad)
    prev_action: np.ndarray
    t: float

    def head_height(self, model: RobotModel) -> float:
        return float(self.q[1] + math.cos(self.q[2]) * model.links["torso"].length)


@dataclass(frozen=True)
class RewardBreakdown:
    r_up: float
    r_pitch: float
    r_vel: float
    r_var: float
    r_collision: float
    total: float


@dataclass(frozen=True)
class Episode:
    returns: float
    steps: int
    done_reason: str
    times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    actions: np.ndarray
    reward_terms: np.ndarray  # columns: up, pitch, vel, var, collision, total
    head_heights: np.ndarray
    collisions: np.ndarray
    final_state: SimState = field(repr=False)


@dataclass(frozen=True)
class EvalResult:
    mean: float
    returns: tuple[float, ...]


def observation(model: RobotModel, state: SimState) -> np.ndarray:
    obs = np.empty(OBS_DIM)
    obs[0:5] = state.q[3:8]
    obs[5:10] = state.qd[3:8]
    obs[10:15] = state.q_desired
    obs[15:18] = (0.0, state.q[2], 0.0)
    obs[18:21] = (0.0, state.qd[2], 0.0)
    obs[21] = state.head_height(model) / model.h_stand
    obs[22:27] = state.prev_action
    return obs


def step_reward(
    model: RobotModel,
    state: SimState,
    action: np.ndarray,
    prev_action: np.ndarray,
    collision_count: int,
) -> RewardBreakdown:
    """The five-term reward on a post-step state (unweighted sum)."""
    h = state.head_height(model) / model.h_stand
    pitch = state.q[2]
    r_up = math.exp(-10.0 * (h - 1.0) ** 2)
    r_pitch = math.exp(-10.0 * pitch * pitch) if h > 0.4 else 0.0
    r_vel = 0.1 * math.exp(-float(np.linalg.norm(state.qd[3:8])))
    r_var = 0.05 * math.exp(
        -float(np.linalg.norm(np.asarray(action) - np.asarray(prev_action)))
    )
    r_coll = 0.1 * math.exp(-float(collision_count))
    return RewardBreakdown(
        r_up=r_up,
        r_pitch=r_pitch,
        r_vel=r_vel,
        r_var=r_var,
        r_collision=r_coll,
        total=r_up + r_pitch + r_vel + r_var + r_coll,
    )


def reset(model: RobotModel, rng: np.random.Generator) -> SimState:
    """Randomized fallen pose: supine or prone, joints within half their
    limits, dropped just above the ground and passively settled."""
    packed = model.packed()
    (anchor, c0, c1, mass, inertia, radius, mount,
     kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off) = packed

    supine = rng.random() < 0.5
    tilt = math.radians(90.0 + rng.uniform(-20.0, 20.0))
    pitch = tilt if supine else -tilt
    q = np.zeros(8)
    q[2] = pitch
    for j in range(5):
        q[3 + j] = rng.uniform(0.5 * jlo[j], 0.5 * jhi[j])
    heights = np.empty(len(cp_link))
    kernel.probe_heights(q, anchor, c0, c1, mount, radius, cp_link, cp_off, heights)
    q[1] = RESET_CLEARANCE - float(np.min(heights))
    qd = np.zeros(8)
    # Settle passively for at least SETTLE_TIME, then keep going in small
    # chunks until the body is quiescent (bent poses fold slowly).
    chunk = int(round(SETTLE_TIME / kernel.DT))
    elapsed = 0.0
    while True:
        kernel.settle(
            q, qd, chunk,
            anchor, c0, c1, mass, inertia, radius, mount,
            kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
            model.contact_kn, model.contact_dn, model.contact_ct, model.contact_mu,
            model.gravity,
        )
        elapsed += chunk * kernel.DT
        quiet = (
            np.max(np.abs(qd[:2])) < SETTLE_QUIET_LIN
            and np.max(np.abs(qd[2:])) < SETTLE_QUIET_ANG
        )
        if quiet or elapsed >= SETTLE_TIME_MAX:
            break
        chunk = int(round(0.1 / kernel.DT))
    return SimState(
        q=q,
        qd=qd,
        q_desired=q[3:8].copy(),
        prev_action=np.zeros(ACT_DIM),
        t=0.0,
    )


def standing_state(model: RobotModel) -> SimState:
    """Upright rest pose with the feet at static contact penetration."""
    hip_z = (
        model.links["foot"].radius
        + model.links["shin"].length
        + model.links["thigh"].length
    )
    # Two foot probe points carry the weight on the penalty springs.
    sag = model.total_mass * model.gravity / (2.0 * model.contact_kn)
    q = np.zeros(8)
    q[1] = hip_z - sag
    return SimState(
        q=q,
        qd=np.zeros(8),
        q_desired=np.zeros(5),
        prev_action=np.zeros(ACT_DIM),
        t=0.0,
    )


def step(
    model: RobotModel,
    state: SimState,
    action: np.ndarray,
    settings: SimSettings = DEFAULT_SETTINGS,
) -> tuple[SimState, np.ndarray, RewardBreakdown, bool, str]:
    """One 50 ms control period; returns the post-step observation."""
    action = np.asarray(action, dtype=float)
    if action.shape != (ACT_DIM,) or not np.all(np.isfinite(action)):
        raise ValueError(f"action must be a finite vector of length {ACT_DIM}")
    q = state.q.copy()
    qd = state.qd.copy()
    qdes = state.q_desired.copy()
    reward_out = np.empty(6)
    obs_out = np.empty(OBS_DIM)
    packed = model.packed()
    done_code, _collisions, t_new = kernel.control_step(
        q, qd, qdes, state.prev_action, action, state.t,
        *packed,
        model.contact_kn, model.contact_dn, model.contact_ct, model.contact_mu,
        model.gravity,
        settings.max_time, settings.tilt_limit_rad, settings.angvel_limit_rad,
        kernel.make_workspace(), reward_out, obs_out,
    )
    new_state = SimState(
        q=q, qd=qd, q_desired=qdes, prev_action=action.copy(), t=t_new
    )
    breakdown = RewardBreakdown(
        r_up=float(reward_out[0]),
        r_pitch=float(reward_out[1]),
        r_vel=float(reward_out[2]),
        r_var=float(reward_out[3]),
        r_collision=float(reward_out[4]),
        total=float(reward_out[5]),
    )
    done = done_code != kernel.DONE_RUNNING
    return new_state, obs_out, breakdown, done, DONE_REASONS[done_code]


def rollout_from(
    model: RobotModel,
    state: SimState,
    policy,
    settings: SimSettings = DEFAULT_SETTINGS,
) -> Episode:
    """Run the policy closed-loop from a given state."""
    w1, b1, w2, b2, v_max = policy.kernel_weights()
    max_steps = settings.max_steps
    trace_q = np.empty((max_steps, 8))
    trace_qd = np.empty((max_steps, 8))
    trace_action = np.empty((max_steps, ACT_DIM))
    trace_reward = np.empty((max_steps, 6))
    trace_extra = np.empty((max_steps, 3))
    q = state.q.copy()
    qd = state.qd.copy()
    qdes = state.q_desired.copy()
    packed = model.packed()
    steps, done_code, total = kernel.run_episode(
        q, qd, qdes,
        w1, b1, w2, b2, v_max,
        *packed,
        model.contact_kn, model.contact_dn, model.contact_ct, model.contact_mu,
        model.gravity,
        settings.max_time, settings.tilt_limit_rad, settings.angvel_limit_rad,
        max_steps,
        trace_q, trace_qd, trace_action, trace_reward, trace_extra,
    )
    final = SimState(
        q=q, qd=qd, q_desired=qdes,
        prev_action=trace_action[steps - 1].copy() if steps else np.zeros(ACT_DIM),
        t=float(trace_extra[steps - 1, 2]) if steps else state.t,
    )
    return Episode(
        returns=float(total),
        steps=int(steps),
        done_reason=DONE_REASONS[int(done_code)],
        times=trace_extra[:steps, 2].copy(),
        q=trace_q[:steps].copy(),
        qd=trace_qd[:steps].copy(),
        actions=trace_action[:steps].copy(),
        reward_terms=trace_reward[:steps].copy(),
        head_heights=trace_extra[:steps, 0].copy(),
        collisions=trace_extra[:steps, 1].astype(int),
        final_state=final,
    )


def rollout(
    model: RobotModel,
    policy,
    rng: np.random.Generator,
    settings: SimSettings = DEFAULT_SETTINGS,
) -> Episode:
    """Reset to a random fallen pose, then run the policy for up to 10 s."""
    return rollout_from(model, reset(model, rng), policy, settings)


def evaluate(
    model: RobotModel,
    policy,
    n_episodes: int = 10,
    seed: int = 0,
    settings: SimSettings = DEFAULT_SETTINGS,
) -> EvalResult:
    """Mean undiscounted return over episodes with per-episode seeds seed+i."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    returns = []
    for i in range(n_episodes):
        rng = np.random.Generator(np.random.PCG64(seed + i))
        returns.append(rollout(model, policy, rng, settings).returns)
    return EvalResult(mean=float(np.mean(returns)), returns=tuple(returns))


def write_trace(episode: Episode, path) -> None:
    """CSV per control tick: time, state, action, reward terms."""
    path = Path(path)
    header = (
        ["t"]
        + ["x", "z", "pitch"]
        + [f"q_{j}" for j in range(5)]
        + ["xd", "zd", "pitchd"]
        + [f"qd_{j}" for j in range(5)]
        + [f"a_{j}" for j in range(5)]
        + ["r_up", "r_pitch", "r_vel", "r_var", "r_collision", "r_total"]
        + ["h_head", "collisions"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(episode.steps):
            row = (
                [repr(float(episode.times[i]))]
                + [repr(float(v)) for v in episode.q[i]]
                + [repr(float(v)) for v in episode.qd[i]]
                + [repr(float(v)) for v in episode.actions[i]]
                + [repr(float(v)) for v in episode.reward_terms[i]]
                + [repr(float(episode.head_heights[i])), str(int(episode.collisions[i]))]
            )
            writer.writerow(row)
