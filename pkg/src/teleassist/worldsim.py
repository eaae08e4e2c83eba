"""Deterministic 2-D branching pick-and-place world.

The workspace is the unit square.  A state packs the end-effector pose, a
gripper flag, and per-object (x, y, attached) triples into one f64 vector:

    [eef_x, eef_y, gripper_closed, obj0_x, obj0_y, obj0_attached, ...]

Transitions are pure functions; clipping absorbs any illegal action.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

GRIP_CLOSE = -1.0
GRIP_HOLD = 0.0
GRIP_OPEN = 1.0


class WorldConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    num_objects: int = 1
    pad_positions: tuple[tuple[float, float], ...] = ((0.15, 0.85), (0.85, 0.85))
    object_spawns: tuple[tuple[float, float], ...] = ((0.5, 0.12),)
    eef_home: tuple[float, float] = (0.9, 0.92)
    max_delta: float = 0.05
    grasp_radius: float = 0.05
    success_radius: float = 0.07
    horizon: int = 400
    spawn_jitter: float = 0.02
    control_hz: int = 10

    def __post_init__(self):
        if self.num_objects < 1:
            raise WorldConfigError("need at least one object")
        if len(self.pad_positions) < 2:
            raise WorldConfigError("need at least two pads")
        if len(self.object_spawns) != self.num_objects:
            raise WorldConfigError("one spawn position per object required")
        if self.grasp_radius <= 0 or self.success_radius <= 0:
            raise WorldConfigError("grasp/success radii must be positive")
        if self.horizon <= 0:
            raise WorldConfigError("horizon must be positive")
        if self.spawn_jitter > 0.05:
            raise WorldConfigError("spawn jitter must be at most 0.05")
        for p in (*self.pad_positions, *self.object_spawns, self.eef_home):
            if not (0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0):
                raise WorldConfigError(f"position {p} outside the unit workspace")

    @property
    def state_dim(self) -> int:
        return 3 + 3 * self.num_objects

    def to_dict(self) -> dict:
        return {
            "num_objects": self.num_objects,
            "pad_positions": [list(p) for p in self.pad_positions],
            "object_spawns": [list(p) for p in self.object_spawns],
            "eef_home": list(self.eef_home),
            "max_delta": self.max_delta,
            "grasp_radius": self.grasp_radius,
            "success_radius": self.success_radius,
            "horizon": self.horizon,
            "spawn_jitter": self.spawn_jitter,
            "control_hz": self.control_hz,
        }

    @staticmethod
    def from_dict(d: dict) -> "WorldConfig":
        return WorldConfig(
            num_objects=d["num_objects"],
            pad_positions=tuple(tuple(p) for p in d["pad_positions"]),
            object_spawns=tuple(tuple(p) for p in d["object_spawns"]),
            eef_home=tuple(d["eef_home"]),
            max_delta=d["max_delta"],
            grasp_radius=d["grasp_radius"],
            success_radius=d["success_radius"],
            horizon=d["horizon"],
            spawn_jitter=d["spawn_jitter"],
            control_hz=d["control_hz"],
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_world() -> WorldConfig:
    """One manipuland, two pads (left/right branch)."""
    return WorldConfig()


def long_horizon_world() -> WorldConfig:
    """Two objects chained through two placements."""
    return WorldConfig(
        num_objects=2,
        object_spawns=((0.35, 0.12), (0.65, 0.12)),
        pad_positions=((0.15, 0.85), (0.85, 0.85)),
        horizon=800,
    )


@dataclass(frozen=True)
class TaskSpec:
    """Ordered (object index, pad index) placement goals."""

    goals: tuple[tuple[int, int], ...]

    def validate(self, config: WorldConfig):
        for obj, pad in self.goals:
            if not (0 <= obj < config.num_objects):
                raise WorldConfigError(f"object index {obj} out of range")
            if not (0 <= pad < len(config.pad_positions)):
                raise WorldConfigError(f"pad index {pad} out of range")

    def to_list(self) -> list[list[int]]:
        return [list(g) for g in self.goals]

    @staticmethod
    def from_list(goals) -> "TaskSpec":
        return TaskSpec(tuple((int(o), int(p)) for o, p in goals))


LEFT_PAD, RIGHT_PAD = 0, 1


# ----- state accessors -----

def eef_pos(state: np.ndarray) -> np.ndarray:
    return state[0:2]


def gripper_closed(state: np.ndarray) -> bool:
    return state[2] > 0.5


def object_pos(state: np.ndarray, i: int) -> np.ndarray:
    return state[3 + 3 * i: 5 + 3 * i]


def object_attached(state: np.ndarray, i: int) -> bool:
    return state[5 + 3 * i] > 0.5


def attached_object(state: np.ndarray, config: WorldConfig) -> int | None:
    for i in range(config.num_objects):
        if object_attached(state, i):
            return i
    return None


def make_action(dx: float, dy: float, grip: float = GRIP_HOLD) -> np.ndarray:
    return np.array([dx, dy, grip], dtype=np.float64)


def clip_action(config: WorldConfig, action: np.ndarray) -> np.ndarray:
    out = np.array(action, dtype=np.float64)
    out[0:2] = np.clip(out[0:2], -config.max_delta, config.max_delta)
    out[2] = float(np.round(np.clip(out[2], -1.0, 1.0)))
    return out


# ----- dynamics -----

def reset(config: WorldConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    state = np.zeros(config.state_dim)
    state[0:2] = config.eef_home
    state[2] = 0.0
    for i, spawn in enumerate(config.object_spawns):
        jitter = rng.uniform(-config.spawn_jitter, config.spawn_jitter, 2)
        pos = np.clip(np.asarray(spawn) + jitter, 0.0, 1.0)
        state[3 + 3 * i: 5 + 3 * i] = pos
        state[5 + 3 * i] = 0.0
    return state


def step(config: WorldConfig, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    action = clip_action(config, action)
    nxt = state.copy()
    nxt[0:2] = np.clip(state[0:2] + action[0:2], 0.0, 1.0)

    held = attached_object(state, config)
    cmd = action[2]
    if cmd == GRIP_CLOSE and not gripper_closed(state):
        nxt[2] = 1.0
        if held is None:
            best, best_d = None, np.inf
            for i in range(config.num_objects):
                d = float(np.linalg.norm(object_pos(state, i) - nxt[0:2]))
                if d < config.grasp_radius and d < best_d:
                    best, best_d = i, d
            if best is not None:
                nxt[5 + 3 * best] = 1.0
                held = best
    elif cmd == GRIP_OPEN:
        nxt[2] = 0.0
        if held is not None:
            nxt[5 + 3 * held] = 0.0
            held = None

    if held is not None:
        nxt[3 + 3 * held: 5 + 3 * held] = nxt[0:2]
    return nxt


def task_success(config: WorldConfig, state: np.ndarray, task: TaskSpec) -> bool:
    for obj, pad in task.goals:
        if object_attached(state, obj):
            return False
        d = float(np.linalg.norm(object_pos(state, obj) - np.asarray(config.pad_positions[pad])))
        if d > config.success_radius:
            return False
    return True


def check_state_invariants(config: WorldConfig, state: np.ndarray):
    assert state.shape == (config.state_dim,)
    assert np.all(state[0:2] >= 0.0) and np.all(state[0:2] <= 1.0)
    attached = [i for i in range(config.num_objects) if object_attached(state, i)]
    assert len(attached) <= 1, "more than one attached object"
    for i in attached:
        assert np.allclose(object_pos(state, i), eef_pos(state)), "attached object away from eef"
    for i in range(config.num_objects):
        p = object_pos(state, i)
        assert np.all(p >= 0.0) and np.all(p <= 1.0)
