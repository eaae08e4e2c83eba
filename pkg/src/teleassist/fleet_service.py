"""Multi-robot data-collection sessions on a fixed 10 Hz tick clock.

One operator (scripted or live over a socket) serves R robots.  Each robot
runs the assisted control flow: resample a subgoal every L ticks, execute
the reaching ensemble, and hand control to the operator when either
uncertainty signal breaches its threshold.  Everything is event-sourced
into a FleetLog; successful episodes become the output corpus.
"""

from __future__ import annotations

import json
import os
import socket
import tempfile
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import worldsim
from .assist_gate import (
    GateConfig, UncertaintyReport, assist_decision, policy_uncertainty,
    task_uncertainty,
)
from .demo_corpus import Corpus, Trajectory, WaypointController
from .nn import ContractError, ParamSet
from .reach_ensemble import (
    GRIP_CLASSES, FlatConfig, ReachConfig, act, first_step_deltas,
    flat_forward, flat_sample_actions, plan_window,
)
from .subgoal_cvae import CvaeConfig, committed_subgoal, sample_subgoals

PROTOCOL_VERSION = 1

MODES = ("full", "no_hierarchy", "no_uncertainty", "unassisted")

ASSISTING = "assisting"
AWAITING_INPUT = "awaiting_input"
HUMAN_CONTROLLED = "human_controlled"
IDLE = "idle"
DONE = "done"

REASON_UNSEEN = "unseen_state"
REASON_TASK = "uncertain_task"


class SessionError(RuntimeError):
    pass


@dataclass
class ModelBundle:
    """Everything a session needs to drive robots: policies plus thresholds."""
    cvae_params: ParamSet | None = None
    cvae_config: CvaeConfig | None = None
    ensemble: list[ParamSet] | None = None
    reach_config: ReachConfig | None = None
    gate: GateConfig | None = None
    flat_ensemble: list[ParamSet] | None = None
    flat_config: FlatConfig | None = None
    flat_gate: GateConfig | None = None


@dataclass(frozen=True)
class SessionConfig:
    robots: int
    budget_ticks: int = 2400        # 4 minutes at 10 Hz
    mode: str = "full"
    seed: int = 0
    episode_horizon: int = 150
    n_subgoal_samples: int = 64
    tick_interval: float = 0.0      # seconds per tick; 0 runs unthrottled
    target_pad: int = worldsim.LEFT_PAD   # the accepted task during collection

    def __post_init__(self):
        if self.robots < 1:
            raise SessionError("need at least 1 robot")
        if self.mode not in MODES:
            raise SessionError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.budget_ticks < 1:
            raise SessionError("budget must be at least 1 tick")


# ---------------------------------------------------------------------------
# Wire messages.  Newline-delimited JSON, "type" as the discriminator; the
# scripted operator exchanges the same dicts in-process.


def observation_frame(robot: int, tick: int, state: np.ndarray, mode: str,
                      report: UncertaintyReport | None,
                      subgoal: np.ndarray | None = None) -> dict:
    return {"type": "observation_frame", "robot": robot, "tick": tick,
            "state": [float(x) for x in state], "mode": mode,
            "report": None if report is None else report.to_dict(),
            "subgoal": None if subgoal is None else [float(x) for x in subgoal]}


def input_request(robot: int, reason: str) -> dict:
    if reason not in (REASON_UNSEEN, REASON_TASK):
        raise SessionError(f"unknown request reason {reason!r}")
    return {"type": "input_request", "robot": robot, "reason": reason}


def control_grant(robot: int) -> dict:
    return {"type": "control_grant", "robot": robot}


def operator_action(robot: int, action: np.ndarray) -> dict:
    return {"type": "operator_action", "robot": robot,
            "action": [float(x) for x in action]}


def switch_robot(robot: int) -> dict:
    return {"type": "switch_robot", "robot": robot}


def override_toggle(robot: int, on: bool) -> dict:
    return {"type": "override_toggle", "robot": robot, "on": bool(on)}


def release(robot: int) -> dict:
    return {"type": "release", "robot": robot}


def session_stats(counters: dict, tick: int) -> dict:
    return {"type": "session_stats", "tick": tick, "counters": dict(counters)}


# ---------------------------------------------------------------------------
# Event-sourced log.  Counters are derived from events and re-derivable.


COUNTER_KEYS = ("demos_collected", "episodes_failed", "human_ticks",
                "autonomous_ticks", "awaiting_ticks",
                "requests_unseen_state", "requests_uncertain_task")


class FleetLog:
    def __init__(self):
        self.events: list[dict] = []
        self.counters: dict[str, int] = {k: 0 for k in COUNTER_KEYS}

    def append(self, tick: int, event: dict):
        self.events.append({"tick": tick, **event})
        self._count(event)

    def _count(self, event: dict):
        kind = event.get("event")
        if kind == "episode_done":
            key = "demos_collected" if event["success"] else "episodes_failed"
            self.counters[key] += 1
        elif kind == "robot_step":
            src = event["source"]
            if src == "human":
                self.counters["human_ticks"] += 1
            elif src == "hold":
                self.counters["awaiting_ticks"] += 1
            else:
                self.counters["autonomous_ticks"] += 1
        elif kind == "input_request":
            self.counters[f"requests_{event['reason']}"] += 1

    def audit(self) -> bool:
        """Recompute counters from events and compare; True when consistent."""
        fresh = FleetLog()
        for ev in self.events:
            fresh._count(ev)
        return fresh.counters == self.counters

    def to_ndjson(self, path):
        dirpath = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=dirpath, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as f:
                header = {"type": "fleet_log", "version": PROTOCOL_VERSION,
                          "counters": self.counters}
                f.write(json.dumps(header, sort_keys=True) + "\n")
                for ev in self.events:
                    f.write(json.dumps(ev, sort_keys=True) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @staticmethod
    def from_ndjson(path) -> "FleetLog":
        log = FleetLog()
        with open(path) as f:
            lines = f.read().splitlines()
        if not lines:
            raise SessionError(f"{path}: empty fleet log")
        header = json.loads(lines[0])
        if header.get("type") != "fleet_log":
            raise SessionError(f"{path}: line 1: missing fleet_log header")
        for line in lines[1:]:
            if not line.strip():
                continue
            ev = json.loads(line)
            tick = ev.pop("tick")
            log.append(tick, ev)
        if log.counters != header["counters"]:
            raise SessionError(f"{path}: stored counters disagree with events")
        return log


# ---------------------------------------------------------------------------
# Per-robot session state.


@dataclass
class RobotState:
    robot: int
    task: worldsim.TaskSpec
    mode: str = ASSISTING
    world_state: np.ndarray | None = None
    episode_seed: int = 0
    episode_index: int = 0
    episode_step: int = 0
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    subgoal: np.ndarray | None = None
    plan: object = None
    steps_since_resample: int = 0
    report: UncertaintyReport | None = None
    override: bool = False
    pending_request: bool = False


class Session:
    """Single logical tick loop over R robots and one operator."""

    def __init__(self, models: ModelBundle, world_config: worldsim.WorldConfig,
                 config: SessionConfig, operator):
        self.models = models
        self.world_config = world_config
        self.config = config
        self.operator = operator
        self.log = FleetLog()
        self.corpus = Corpus(world_config=world_config,
                             metadata={"mode": config.mode,
                                       "robots": config.robots,
                                       "budget_ticks": config.budget_ticks,
                                       "seed": config.seed})
        self._validate_models()
        self.rng = np.random.default_rng(config.seed)
        task = worldsim.TaskSpec(((0, config.target_pad),))
        start_mode = IDLE if config.mode == "unassisted" else ASSISTING
        self.robots = [RobotState(robot=i, task=task, mode=start_mode)
                       for i in range(config.robots)]
        self.controlled: int | None = None
        self.tick = 0
        self.log.append(0, {"event": "session_start", "robot": -1,
                            "mode": config.mode, "robots": config.robots,
                            "budget_ticks": config.budget_ticks,
                            "seed": config.seed})
        for r in self.robots:
            self._reset_episode(r)

    def _validate_models(self):
        m, mode = self.models, self.config.mode
        if mode in ("full", "no_uncertainty"):
            if m.cvae_params is None or m.ensemble is None:
                raise SessionError(f"mode {mode!r} needs the hierarchical models")
        if mode == "full" and m.gate is None:
            raise SessionError("mode 'full' needs calibrated gate thresholds")
        if mode == "no_hierarchy":
            if m.flat_ensemble is None or m.flat_config is None:
                raise SessionError("mode 'no_hierarchy' needs the flat ensemble")
            if m.flat_gate is None:
                raise SessionError("mode 'no_hierarchy' needs flat gate thresholds")

    # -- episode lifecycle --------------------------------------------------

    def _reset_episode(self, r: RobotState):
        r.episode_seed = int(self.rng.integers(0, 2**31 - 1))
        r.world_state = worldsim.reset(self.world_config, r.episode_seed)
        r.episode_step = 0
        r.states = [r.world_state]
        r.actions = []
        r.annotations = []
        r.subgoal = None
        r.plan = None
        r.steps_since_resample = 0
        r.report = None
        r.pending_request = False
        self.log.append(self.tick, {
            "event": "episode_start", "robot": r.robot,
            "episode": r.episode_index, "seed": r.episode_seed,
            "state": [float(x) for x in r.world_state]})
        if r.mode not in (HUMAN_CONTROLLED, DONE):
            r.mode = IDLE if self.config.mode == "unassisted" else ASSISTING
        if self.config.mode == "unassisted" and r.mode == IDLE:
            self._request(r, REASON_TASK)

    def _finish_episode(self, r: RobotState, success: bool):
        self.log.append(self.tick, {
            "event": "episode_done", "robot": r.robot,
            "episode": r.episode_index, "success": success,
            "steps": r.episode_step})
        if r.mode == HUMAN_CONTROLLED:
            # control ends with the episode; the operator sees the mode
            # change in the next frame
            self.controlled = None
            r.override = False
            r.pending_request = False
            r.mode = IDLE if self.config.mode == "unassisted" else ASSISTING
            self.log.append(self.tick, {"event": "release", "robot": r.robot})
        if success and len(r.states) >= 2:
            self.corpus.trajectories.append(Trajectory(
                id=f"session-r{r.robot}-e{r.episode_index}",
                world_hash=self.world_config.hash(),
                task=r.task, seed=r.episode_seed,
                states=list(r.states), actions=list(r.actions),
                annotations=list(r.annotations), success=True))
        r.episode_index += 1
        self._reset_episode(r)

    def _request(self, r: RobotState, reason: str):
        if r.pending_request or r.mode == HUMAN_CONTROLLED:
            return
        r.pending_request = True
        r.mode = AWAITING_INPUT if self.config.mode != "unassisted" else IDLE
        msg = input_request(r.robot, reason)
        self.log.append(self.tick, {"event": "input_request",
                                    "robot": r.robot, "reason": reason,
                                    "episode": r.episode_index,
                                    "episode_step": r.episode_step})
        self.operator.handle(msg)

    # -- uncertainty monitors ----------------------------------------------

    def _monitor_full(self, r: RobotState, resample: bool) -> UncertaintyReport:
        # task uncertainty is evaluated every tick, not only on the L-step
        # replanning grid: the branch peak spans only a few ticks, so a
        # grid-sampled signal sees the peak or misses it depending on how
        # the grid happens to align with the grasp in that episode
        m = self.models
        subs = sample_subgoals(
            m.cvae_params, m.cvae_config, r.world_state,
            self.config.n_subgoal_samples,
            int(self.rng.integers(0, 2**31 - 1)))
        task_u = task_uncertainty(subs)
        if resample or r.subgoal is None:
            r.subgoal = committed_subgoal(subs, r.subgoal)
            r.plan = plan_window(m.ensemble, m.reach_config, r.world_state,
                                 r.subgoal)
            r.steps_since_resample = 0
        policy_u = policy_uncertainty(
            first_step_deltas(m.ensemble, m.reach_config, r.world_state,
                              r.subgoal))
        gate = m.gate if self.config.mode == "full" else None
        if gate is None:
            # monitoring only: report with infinite headroom, never breaches
            _, report = assist_decision(policy_u, task_u, r.override,
                                        GateConfig(gamma=np.inf, omega=np.inf,
                                                   n_subgoal_samples=2),
                                        tick=self.tick)
        else:
            _, report = assist_decision(policy_u, task_u, r.override, gate,
                                        tick=self.tick)
        return report

    def _monitor_flat(self, r: RobotState) -> UncertaintyReport:
        m = self.models
        means = np.stack([flat_forward(p, m.flat_config, r.world_state)[0][0]
                          for p in m.flat_ensemble])
        policy_u = policy_uncertainty(means)
        samples = flat_sample_actions(
            m.flat_ensemble[0], m.flat_config, r.world_state,
            self.config.n_subgoal_samples,
            int(self.rng.integers(0, 2**31 - 1)))
        task_u = float(np.mean(np.var(samples, axis=0)))
        _, report = assist_decision(policy_u, task_u, r.override, m.flat_gate,
                                    tick=self.tick)
        return report

    # -- per-tick robot stepping -------------------------------------------

    def _autonomous_action(self, r: RobotState) -> np.ndarray:
        m = self.models
        if self.config.mode == "no_hierarchy":
            mean, log_std, logits = flat_forward(m.flat_ensemble[0],
                                                 m.flat_config, r.world_state)
            eps = self.rng.standard_normal(2)
            delta = mean[0] + np.exp(log_std[0]) * eps
            grip = GRIP_CLASSES[int(np.argmax(logits[0]))]
            return worldsim.clip_action(
                self.world_config,
                worldsim.make_action(delta[0], delta[1], grip))
        if r.plan is None or r.steps_since_resample >= m.reach_config.skill_horizon:
            subs = sample_subgoals(m.cvae_params, m.cvae_config, r.world_state,
                                   self.config.n_subgoal_samples,
                                   int(self.rng.integers(0, 2**31 - 1)))
            r.subgoal = committed_subgoal(subs, r.subgoal)
            r.plan = plan_window(m.ensemble, m.reach_config, r.world_state,
                                 r.subgoal)
            r.steps_since_resample = 0
        return act(r.plan, self.world_config, r.steps_since_resample)

    def _apply(self, r: RobotState, action: np.ndarray, source: str):
        action = worldsim.clip_action(self.world_config, action)
        r.world_state = worldsim.step(self.world_config, r.world_state, action)
        r.states.append(r.world_state)
        r.actions.append(action)
        r.annotations.append("human" if source == "human" else "assisted")
        r.episode_step += 1
        r.steps_since_resample += 1
        self.log.append(self.tick, self._step_event(r, source))

    def _step_event(self, r: RobotState, source: str) -> dict:
        # carries everything the next observation frame will show, so a
        # stored log replays to the exact view the live operator saw
        return {"event": "robot_step", "robot": r.robot, "source": source,
                "state": [float(x) for x in r.world_state],
                "report": None if r.report is None else r.report.to_dict(),
                "subgoal": (None if r.subgoal is None
                            else [float(x) for x in r.subgoal])}

    def _hold(self, r: RobotState):
        """A waiting tick: the state is a fixpoint under the zero action, so
        nothing is recorded into the episode and the horizon does not run."""
        self.log.append(self.tick, self._step_event(r, "hold"))

    def _step_robot(self, r: RobotState, human_action: np.ndarray | None):
        mode_cfg = self.config.mode
        hold = worldsim.make_action(0.0, 0.0, worldsim.GRIP_HOLD)
        if r.mode == HUMAN_CONTROLLED:
            if mode_cfg == "full":
                # monitor every tick under human control: the operator's
                # release waits on L consecutive clear ticks, and a stale
                # task signal would quantize that wait to the resample grid
                r.report = self._monitor_full(r, resample=True)
            elif mode_cfg == "no_hierarchy":
                r.report = self._monitor_flat(r)
            if human_action is not None:
                self._apply(r, human_action, "human")
            else:
                self._hold(r)
        elif r.mode == ASSISTING:
            if mode_cfg == "full":
                resample = (r.plan is None
                            or r.steps_since_resample
                            >= self.models.reach_config.skill_horizon)
                r.report = self._monitor_full(r, resample)
                if not r.report.assist:
                    reason = (REASON_UNSEEN
                              if r.report.policy_uncertainty > r.report.gamma
                              else REASON_TASK)
                    self._request(r, reason)
                    self._hold(r)
                    return
            elif mode_cfg == "no_hierarchy":
                r.report = self._monitor_flat(r)
                if not r.report.assist:
                    reason = (REASON_UNSEEN
                              if r.report.policy_uncertainty > r.report.gamma
                              else REASON_TASK)
                    self._request(r, reason)
                    self._hold(r)
                    return
            self._apply(r, self._autonomous_action(r), "auto")
        elif r.mode in (AWAITING_INPUT, IDLE):
            self._hold(r)
        # episode termination
        if worldsim.task_success(self.world_config, r.world_state, r.task):
            self._finish_episode(r, success=True)
        elif r.episode_step >= self.config.episode_horizon:
            self._finish_episode(r, success=False)

    # -- operator message handling -----------------------------------------

    def _apply_operator_msgs(self, msgs: list[dict]) -> dict[int, np.ndarray]:
        actions: dict[int, np.ndarray] = {}
        for msg in msgs:
            kind = msg.get("type")
            robot = msg.get("robot")
            if robot is None or not (0 <= robot < len(self.robots)):
                raise SessionError(f"operator message for unknown robot: {msg}")
            r = self.robots[robot]
            if kind == "switch_robot":
                if self.controlled is not None and self.controlled != robot:
                    prev = self.robots[self.controlled]
                    prev.override = False
                    prev.pending_request = False
                    prev.mode = (IDLE if self.config.mode == "unassisted"
                                 else ASSISTING)
                self.controlled = robot
                r.mode = HUMAN_CONTROLLED
                r.override = True
                r.pending_request = False
                self.log.append(self.tick, {"event": "control_grant",
                                            "robot": robot})
                self.operator.handle(control_grant(robot))
            elif kind == "release":
                if self.controlled == robot:
                    self.controlled = None
                r.override = False
                r.pending_request = False
                r.mode = IDLE if self.config.mode == "unassisted" else ASSISTING
                # force a fresh plan after a human segment
                r.plan = None
                r.subgoal = None
                self.log.append(self.tick, {"event": "release", "robot": robot})
                if self.config.mode == "unassisted":
                    self._request(r, REASON_TASK)
            elif kind == "operator_action":
                if r.mode == HUMAN_CONTROLLED:
                    actions[robot] = np.asarray(msg["action"], dtype=np.float64)
            elif kind == "override_toggle":
                r.override = bool(msg["on"])
            else:
                raise SessionError(f"unknown operator message type {kind!r}")
        if sum(1 for r in self.robots if r.mode == HUMAN_CONTROLLED) > 1:
            raise SessionError("single-controller invariant violated")
        return actions

    # -- main loop ----------------------------------------------------------

    def run(self) -> tuple[FleetLog, Corpus]:
        start = time.monotonic()
        for self.tick in range(self.config.budget_ticks):
            if self.config.tick_interval > 0:
                # wall-clock pacing for a human operator; scripted
                # sessions run unthrottled and stay deterministic
                deadline = start + self.tick * self.config.tick_interval
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            frames = [observation_frame(r.robot, self.tick, r.world_state,
                                        r.mode, r.report, r.subgoal)
                      for r in self.robots]
            if not self.operator.connected():
                for r in self.robots:
                    if r.mode in (ASSISTING, HUMAN_CONTROLLED, IDLE):
                        r.mode = AWAITING_INPUT
                self.controlled = None
                continue
            for frame in frames:
                self.operator.handle(frame)
            actions = self._apply_operator_msgs(self.operator.poll(self.tick))
            for r in self.robots:
                self._step_robot(r, actions.get(r.robot))
        for r in self.robots:
            if r.episode_step > 0:
                self._finish_episode(r, success=False)
            r.mode = DONE
        self.log.append(self.config.budget_ticks,
                        {"event": "session_end", "robot": -1})
        self.operator.handle(session_stats(self.log.counters,
                                           self.config.budget_ticks))
        return self.log, self.corpus


def run_session(models: ModelBundle, world_config: worldsim.WorldConfig,
                config: SessionConfig, operator) -> tuple[FleetLog, Corpus]:
    return Session(models, world_config, config, operator).run()


# ---------------------------------------------------------------------------
# Flat-ensemble gate calibration for the no_hierarchy ablation: policy
# uncertainty is member-mean disagreement, task uncertainty the variance of
# sampled actions from the stochastic flat policy.


def calibrate_flat_gate(trajectories, flat_ensemble: list[ParamSet],
                        flat_config: FlatConfig, n_samples: int = 64,
                        seed: int = 0) -> GateConfig:
    from .assist_gate import largest_gap_threshold
    rng = np.random.default_rng(seed)
    pol, task = [], []
    for traj in trajectories:
        for state in traj.states[:-1]:
            means = np.stack([flat_forward(p, flat_config, state)[0][0]
                              for p in flat_ensemble])
            pol.append(policy_uncertainty(means))
            samples = flat_sample_actions(flat_ensemble[0], flat_config, state,
                                          n_samples,
                                          int(rng.integers(0, 2**31 - 1)))
            task.append(float(np.mean(np.var(samples, axis=0))))
    return GateConfig(gamma=largest_gap_threshold(pol),
                      omega=largest_gap_threshold(task),
                      n_subgoal_samples=n_samples)


# ---------------------------------------------------------------------------
# Scripted operator: a deterministic stand-in for the human.  Services
# requests FIFO after a switch latency, drives at reduced manual speed
# toward the accepted (left-pad) task, and releases once the robot's
# uncertainty stays below threshold for L consecutive ticks or the subtask
# completes.  In modes without a gate it also watches for wrong-pad
# commitment and stalls and grabs those robots as corrections.


class ScriptedOperator:
    def __init__(self, world_config: worldsim.WorldConfig,
                 task: worldsim.TaskSpec | None = None,
                 switch_latency_ticks: int = 3,
                 manual_speed: float = 0.75,
                 clear_ticks: int = 6,
                 stall_ticks: int = 25):
        if switch_latency_ticks < 0:
            raise SessionError("switch latency must be >= 0")
        self.world_config = world_config
        self.task = task or worldsim.TaskSpec(((0, worldsim.LEFT_PAD),))
        self.controller = WaypointController(world_config, self.task,
                                             speed=manual_speed)
        self.latency = switch_latency_ticks
        self.clear_ticks = clear_ticks
        self.stall_ticks = stall_ticks
        self.queue: list[int] = []
        self.controlling: int | None = None
        self.switch_at: int | None = None
        self.switch_target: int | None = None
        self.clear_run = 0
        self.last_states: dict[int, np.ndarray] = {}
        self.last_reports: dict[int, UncertaintyReport | None] = {}
        self.last_modes: dict[int, str] = {}
        self.still: dict[int, int] = {}
        self.wrong_pad = (worldsim.RIGHT_PAD
                          if self.task.goals[0][1] == worldsim.LEFT_PAD
                          else worldsim.LEFT_PAD)
        self.grabbed: set[int] = set()
        self.stats: dict | None = None

    def connected(self) -> bool:
        return True

    def handle(self, msg: dict):
        kind = msg["type"]
        if kind == "input_request":
            # the service is authoritative: a request can arrive for a robot
            # this operator still believes it controls (auto-release on
            # episode completion happens inside the service's tick)
            robot = msg["robot"]
            if robot not in self.queue and robot != self.switch_target:
                self.queue.append(robot)
        elif kind == "observation_frame":
            robot = msg["robot"]
            if robot == self.controlling and msg["mode"] != HUMAN_CONTROLLED:
                # the session ended the episode and released the robot
                self.controlling = None
                self.clear_run = 0
            state = np.asarray(msg["state"], dtype=np.float64)
            prev = self.last_states.get(robot)
            if prev is not None and np.max(np.abs(state - prev)) < 1e-9:
                self.still[robot] = self.still.get(robot, 0) + 1
            else:
                self.still[robot] = 0
            self.last_states[robot] = state
            self.last_modes[robot] = msg["mode"]
            rep = msg.get("report")
            self.last_reports[robot] = rep
        elif kind == "control_grant":
            self.controlling = msg["robot"]
            self.switch_target = None
            self.clear_run = 0
        elif kind == "session_stats":
            self.stats = msg

    def _needs_correction(self, robot: int) -> bool:
        state = self.last_states.get(robot)
        if state is None or self.last_modes.get(robot) != ASSISTING:
            return False
        held = worldsim.attached_object(state, self.world_config)
        if held is not None:
            pad = np.asarray(self.world_config.pad_positions[self.wrong_pad])
            if np.linalg.norm(worldsim.eef_pos(state) - pad) \
                    < 2.5 * self.world_config.success_radius:
                return True
        return self.still.get(robot, 0) >= self.stall_ticks

    def poll(self, tick: int) -> list[dict]:
        out: list[dict] = []
        # corrections in modes where robots never self-request
        for robot in sorted(self.last_states):
            if self._needs_correction(robot) and robot not in self.queue \
                    and robot != self.controlling and robot != self.switch_target:
                self.queue.append(robot)
        if self.controlling is not None:
            robot = self.controlling
            state = self.last_states.get(robot)
            done = state is not None and worldsim.task_success(
                self.world_config, state, self.task)
            rep = self.last_reports.get(robot)
            if rep is not None:
                below = (not rep["policy_uncertainty"] > rep["gamma"]
                         and not rep["task_uncertainty"] > rep["omega"])
                self.clear_run = self.clear_run + 1 if below else 0
            cleared = (rep is not None and self.clear_run >= self.clear_ticks
                       and worldsim.object_attached(state, 0))
            if done or cleared:
                out.append(release(robot))
                self.controlling = None
                self.clear_run = 0
            elif state is not None:
                out.append(operator_action(
                    robot, self.controller.action(state)))
        if self.controlling is None and self.switch_target is None and self.queue:
            self.switch_target = self.queue.pop(0)
            self.switch_at = tick + self.latency
        if self.switch_target is not None and tick >= self.switch_at:
            out.append(switch_robot(self.switch_target))
        return out


# ---------------------------------------------------------------------------
# Live operator: NDJSON over a TCP socket.  The session thread stays the
# single writer; a reader thread queues inbound messages which are applied
# only at tick boundaries.


class LiveOperator:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.server = socket.create_server((host, port))
        self.port = self.server.getsockname()[1]
        self.conn: socket.socket | None = None
        self.inbox: list[dict] = []
        self.lock = threading.Lock()
        self.closed = False
        self._reader: threading.Thread | None = None

    def accept(self, timeout: float | None = None):
        self.server.settimeout(timeout)
        self.conn, _ = self.server.accept()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        buf = b""
        try:
            while True:
                chunk = self.conn.recv(4096)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        msg = json.loads(line)
                        with self.lock:
                            self.inbox.append(msg)
        except OSError:
            pass
        finally:
            with self.lock:
                self.closed = True

    def connected(self) -> bool:
        with self.lock:
            return self.conn is not None and not self.closed

    def handle(self, msg: dict):
        if not self.connected():
            return
        try:
            self.conn.sendall((json.dumps(msg) + "\n").encode())
        except OSError:
            with self.lock:
                self.closed = True

    def poll(self, tick: int) -> list[dict]:
        with self.lock:
            msgs, self.inbox = self.inbox, []
        return msgs

    def close(self):
        with self.lock:
            self.closed = True
        for s in (self.conn, self.server):
            if s is not None:
                try:
                    s.close()
                except OSError:
                    pass
