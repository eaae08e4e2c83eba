"""Scripted demonstrators, trajectory storage, and training-window sampling."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import worldsim
from .worldsim import (
    GRIP_CLOSE, GRIP_HOLD, GRIP_OPEN,
    TaskSpec, WorldConfig, WorldConfigError,
)

CORPUS_FORMAT_VERSION = 1
GENERATOR_VERSION = "1"


class CorpusError(ValueError):
    pass


@dataclass
class Trajectory:
    id: str
    world_hash: str
    task: TaskSpec
    seed: int
    states: list[np.ndarray]
    actions: list[np.ndarray]
    annotations: list[str]
    success: bool

    def __post_init__(self):
        if len(self.states) < 2:
            raise CorpusError("trajectory must contain at least 2 states")
        if len(self.actions) != len(self.states) - 1:
            raise CorpusError("need exactly one action per transition")
        if len(self.annotations) != len(self.actions):
            raise CorpusError("need exactly one annotation per action")

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class Corpus:
    world_config: WorldConfig
    trajectories: list[Trajectory] = field(default_factory=list)
    format_version: int = CORPUS_FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def state_dim(self) -> int:
        return self.world_config.state_dim


@dataclass
class TrainingWindow:
    state: np.ndarray          # s_t
    actions: np.ndarray        # (L, 3) action rows a_t .. a_{t+L-1}
    subgoal: np.ndarray        # s_{t+H}, clamped to the trajectory's final state


# ---------------------------------------------------------------------------
# Waypoint controller.  Derives its phase from the world state, so it works
# both for demo generation and for mid-episode operator corrections.


class WaypointController:
    """Proportional pick-and-place controller over a TaskSpec.

    `speed` scales the per-step displacement limit; the scripted human
    operator uses speed < 1 to model slower manual control.
    """

    def __init__(self, config: WorldConfig, task: TaskSpec, gain: float = 0.7,
                 speed: float = 1.0):
        task.validate(config)
        self.config = config
        self.task = task
        self.gain = gain
        self.speed = speed

    def pending_goal(self, state: np.ndarray) -> tuple[int, int] | None:
        for obj, pad in self.task.goals:
            pad_pos = np.asarray(self.config.pad_positions[pad])
            placed = (
                not worldsim.object_attached(state, obj)
                and np.linalg.norm(worldsim.object_pos(state, obj) - pad_pos)
                <= self.config.success_radius * 0.6
            )
            if not placed:
                return obj, pad
        return None

    def action(self, state: np.ndarray) -> np.ndarray:
        cfg = self.config
        goal = self.pending_goal(state)
        if goal is None:
            return worldsim.make_action(0.0, 0.0, GRIP_HOLD)
        obj, pad = goal
        eef = worldsim.eef_pos(state)
        held = worldsim.attached_object(state, cfg)
        if held is not None and held != obj:
            return worldsim.make_action(0.0, 0.0, GRIP_OPEN)
        if held == obj:
            target = np.asarray(cfg.pad_positions[pad])
            if np.linalg.norm(eef - target) <= cfg.success_radius * 0.5:
                return worldsim.make_action(0.0, 0.0, GRIP_OPEN)
            grip = GRIP_HOLD
        else:
            target = worldsim.object_pos(state, obj)
            if np.linalg.norm(eef - target) <= cfg.grasp_radius * 0.5:
                return worldsim.make_action(0.0, 0.0, GRIP_CLOSE)
            # route through a staging point above the object so the final
            # approach is a straight vertical descent; lateral error decays
            # over the descent and the close fires on target
            via = target + np.array([0.0, 0.5])
            if (np.dot(target - via, eef - via) < 0
                    and np.linalg.norm(eef - via) > cfg.max_delta):
                target = via
            grip = GRIP_HOLD
        limit = cfg.max_delta * self.speed
        delta = np.clip(self.gain * (target - eef), -limit, limit)
        return worldsim.make_action(delta[0], delta[1], grip)


def scripted_demo(config: WorldConfig, task: TaskSpec, seed: int,
                  noise_scale: float = 0.0, traj_id: str | None = None,
                  terminal_holds: int = 4) -> Trajectory:
    task.validate(config)
    rng = np.random.default_rng(seed)
    controller = WaypointController(config, task)
    state = worldsim.reset(config, seed)
    states, actions, annotations = [state], [], []
    for _ in range(config.horizon):
        action = controller.action(state)
        if noise_scale > 0:
            action = action.copy()
            action[0:2] += rng.normal(0.0, noise_scale, 2)
        action = worldsim.clip_action(config, action)
        state = worldsim.step(config, state, action)
        states.append(state)
        actions.append(action)
        annotations.append("scripted")
        if worldsim.task_success(config, state, task):
            break
    if worldsim.task_success(config, state, task):
        # a short stationary tail teaches hold-at-goal behavior
        hold = worldsim.make_action(0.0, 0.0, GRIP_HOLD)
        for _ in range(terminal_holds):
            state = worldsim.step(config, state, hold)
            states.append(state)
            actions.append(hold.copy())
            annotations.append("scripted")
    return Trajectory(
        id=traj_id or f"demo-{seed}",
        world_hash=config.hash(),
        task=task,
        seed=seed,
        states=states,
        actions=actions,
        annotations=annotations,
        success=worldsim.task_success(config, state, task),
    )


def generate_branch_corpus(config: WorldConfig, n: int, seed: int,
                           noise_scale: float = 0.002,
                           obj: int = 0) -> Corpus:
    """n scripted demos splitting ~50/50 between the left and right pads."""
    rng = np.random.default_rng(seed)
    trajectories = []
    for i in range(n):
        pad = worldsim.LEFT_PAD if rng.random() < 0.5 else worldsim.RIGHT_PAD
        task = TaskSpec(((obj, pad),))
        demo_seed = int(rng.integers(0, 2**31 - 1))
        trajectories.append(
            scripted_demo(config, task, demo_seed, noise_scale, traj_id=f"demo-{i:04d}")
        )
    return Corpus(
        world_config=config,
        trajectories=trajectories,
        metadata={"generator_version": GENERATOR_VERSION, "seed": seed,
                  "noise_scale": noise_scale},
    )


# ---------------------------------------------------------------------------
# NDJSON storage: one header line, then one trajectory per line.  Floats are
# emitted via repr (shortest round-trip), so save -> load -> save is a
# byte-level fixpoint.


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_corpus(corpus: Corpus, path):
    header = {
        "type": "header",
        "format_version": corpus.format_version,
        "world_hash": corpus.world_config.hash(),
        "world_config": corpus.world_config.to_dict(),
        "metadata": corpus.metadata,
    }
    dirpath = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=dirpath, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(_dump(header) + "\n")
            for traj in corpus.trajectories:
                record = {
                    "type": "trajectory",
                    "id": traj.id,
                    "world_hash": traj.world_hash,
                    "task": traj.task.to_list(),
                    "seed": traj.seed,
                    "states": [s.tolist() for s in traj.states],
                    "actions": [a.tolist() for a in traj.actions],
                    "annotations": traj.annotations,
                    "success": traj.success,
                }
                f.write(_dump(record) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_corpus(path) -> Corpus:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise CorpusError(f"{path}: line 1: empty corpus file (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise CorpusError(f"{path}: line 1: malformed header: {e}") from e
    if header.get("type") != "header":
        raise CorpusError(f"{path}: line 1: first record must be the header")
    if header.get("format_version") != CORPUS_FORMAT_VERSION:
        raise CorpusError(
            f"{path}: line 1: unsupported format version {header.get('format_version')}"
        )
    config = WorldConfig.from_dict(header["world_config"])
    trajectories = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if rec.get("type") != "trajectory":
                raise CorpusError(f"unexpected record type {rec.get('type')!r}")
            traj = Trajectory(
                id=rec["id"],
                world_hash=rec["world_hash"],
                task=TaskSpec.from_list(rec["task"]),
                seed=rec["seed"],
                states=[np.asarray(s, dtype=np.float64) for s in rec["states"]],
                actions=[np.asarray(a, dtype=np.float64) for a in rec["actions"]],
                annotations=list(rec["annotations"]),
                success=bool(rec["success"]),
            )
        except (json.JSONDecodeError, KeyError, CorpusError, TypeError) as e:
            raise CorpusError(f"{path}: line {lineno}: malformed trajectory record: {e}") from e
        trajectories.append(traj)
    return Corpus(world_config=config, trajectories=trajectories,
                  format_version=header["format_version"], metadata=header["metadata"])


def replay_deviation(corpus: Corpus) -> float:
    """Max |stored - replayed| over all states; checks trajectory consistency."""
    worst = 0.0
    for traj in corpus.trajectories:
        state = traj.states[0]
        for action, stored in zip(traj.actions, traj.states[1:]):
            state = worldsim.step(corpus.world_config, state, action)
            worst = max(worst, float(np.max(np.abs(state - stored))))
    return worst


# ---------------------------------------------------------------------------
# Window sampling


def sample_windows(corpus: Corpus, H: int, L: int, batch: int, seed: int,
                   gap_jitter: bool = False,
                   stationary_frac: float = 0.0) -> list[TrainingWindow]:
    """Uniform windows over all valid (trajectory, t) pairs.

    With `gap_jitter` the subgoal gap is drawn uniformly from [L, H] per
    window instead of fixed at H, matching execution where a replanned goal
    can sit anywhere within the lookahead.  `stationary_frac` replaces that
    fraction of windows with (s, goal=s, hold actions) pairs so a policy
    trained on them learns to stay put at a reached goal.
    """
    if H < L or L < 1:
        raise CorpusError(f"need H >= L >= 1, got H={H} L={L}")
    if not corpus.trajectories:
        raise CorpusError("empty corpus")
    pairs: list[tuple[int, int]] = []
    for ti, traj in enumerate(corpus.trajectories):
        for t in range(len(traj.actions) - L + 1):
            pairs.append((ti, t))
    if not pairs:
        raise CorpusError(f"no trajectory long enough for skill horizon L={L}")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(pairs), size=batch)
    hold = worldsim.make_action(0.0, 0.0, GRIP_HOLD)
    windows = []
    for k in picks:
        ti, t = pairs[int(k)]
        traj = corpus.trajectories[ti]
        if stationary_frac > 0 and rng.random() < stationary_frac:
            windows.append(TrainingWindow(
                state=traj.states[t],
                actions=np.stack([hold] * L),
                subgoal=traj.states[t],
            ))
            continue
        gap = int(rng.integers(L, H + 1)) if gap_jitter else H
        sg_index = min(t + gap, len(traj.states) - 1)
        windows.append(TrainingWindow(
            state=traj.states[t],
            actions=np.stack(traj.actions[t:t + L]),
            subgoal=traj.states[sg_index],
        ))
    return windows
