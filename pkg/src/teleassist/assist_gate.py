"""Uncertainty estimators, threshold calibration, and the assist predicate.

Assist holds only when neither uncertainty strictly exceeds its threshold and
the operator has not taken over:  assist = !(D > gamma) & !(Var > omega) & !H.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import worldsim
from .demo_corpus import Trajectory
from .nn import ContractError, ParamSet
from .reach_ensemble import ReachConfig, first_step_deltas
from .subgoal_cvae import CvaeConfig, committed_subgoal, sample_subgoals


class CalibrationError(RuntimeError):
    """No separable high/low uncertainty regions in the calibration trace."""


@dataclass
class GateConfig:
    gamma: float                 # policy-uncertainty threshold
    omega: float                 # task-uncertainty threshold
    n_subgoal_samples: int = 1024
    # cadence: both uncertainties every step; enforced by the session loop.

    def __post_init__(self):
        # zero is the degenerate always-breach threshold and is permitted
        if self.gamma < 0 or self.omega < 0:
            raise ContractError("thresholds must be non-negative")
        if self.n_subgoal_samples < 2:
            raise ContractError("need at least 2 subgoal samples")


@dataclass
class UncertaintyReport:
    policy_uncertainty: float
    task_uncertainty: float
    gamma: float
    omega: float
    human_override: bool
    assist: bool
    tick: int = 0

    def check(self):
        expected = (not (self.policy_uncertainty > self.gamma)
                    and not (self.task_uncertainty > self.omega)
                    and not self.human_override)
        if self.assist != expected:
            raise AssertionError("inconsistent UncertaintyReport")

    def to_dict(self) -> dict:
        return {
            "policy_uncertainty": self.policy_uncertainty,
            "task_uncertainty": self.task_uncertainty,
            "gamma": self.gamma,
            "omega": self.omega,
            "human_override": self.human_override,
            "assist": self.assist,
            "tick": self.tick,
        }


def policy_uncertainty(deltas: np.ndarray) -> float:
    """Mean over action dims of the population variance across ensemble members."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 2 or deltas.shape[0] < 2:
        raise ContractError("need a (K, dims) array with K >= 2")
    return float(np.mean(np.var(deltas, axis=0)))


def task_uncertainty(subgoals: np.ndarray) -> float:
    """Mean over the 2 eef dims of the population variance across subgoal samples."""
    subgoals = np.asarray(subgoals, dtype=np.float64)
    if subgoals.ndim != 2 or subgoals.shape[0] < 2:
        raise ContractError("need a (N, state_dim) array with N >= 2")
    return float(np.mean(np.var(subgoals[:, 0:2], axis=0)))


def assist_decision(policy_u: float, task_u: float, override: bool,
                    config: GateConfig, tick: int = 0,
                    ) -> tuple[bool, UncertaintyReport]:
    assist = (not (policy_u > config.gamma)
              and not (task_u > config.omega)
              and not override)
    report = UncertaintyReport(
        policy_uncertainty=float(policy_u), task_uncertainty=float(task_u),
        gamma=config.gamma, omega=config.omega,
        human_override=bool(override), assist=assist, tick=tick)
    report.check()
    return assist, report


def largest_gap_threshold(values) -> float:
    """Midpoint of the largest gap between adjacent distinct sorted values."""
    distinct = sorted(set(float(v) for v in values))
    if len(distinct) < 2:
        raise CalibrationError("constant uncertainty trace: no separable regions")
    gaps = [(hi - lo, lo, hi) for lo, hi in zip(distinct, distinct[1:])]
    _, lo, hi = max(gaps, key=lambda g: g[0])
    return (lo + hi) / 2.0


@dataclass
class CalibrationReport:
    gamma: float
    omega: float
    rows: list[dict]   # per (trajectory, step): policy_u, task_u (task may be None)

    def to_csv(self) -> str:
        lines = ["trajectory,step,policy_u,task_u"]
        for r in self.rows:
            task = "" if r["task_u"] is None else f"{r['task_u']:.12g}"
            lines.append(f"{r['trajectory']},{r['step']},{r['policy_u']:.12g},{task}")
        lines.append(f"# gamma,{self.gamma:.12g}")
        lines.append(f"# omega,{self.omega:.12g}")
        return "\n".join(lines) + "\n"


def uncertainty_traces(trajectories: list[Trajectory],
                       cvae_params: ParamSet, cvae_config: CvaeConfig,
                       ensemble: list[ParamSet], reach_config: ReachConfig,
                       n_subgoal_samples: int, seed: int) -> list[dict]:
    """Both uncertainty signals along stored trajectories.

    Both signals are evaluated at every step, matching the session monitor:
    the branch-uncertainty peak spans only a few ticks, so a grid-sampled
    trace would see or miss it depending on grid alignment.  Policy
    uncertainty is the member disagreement over the immediate next action,
    from a plan recomputed at the current state; the subgoal is the
    trajectory's own stored state H ahead of the latest L-step resample
    point, so the trace pairs states with goals the way training did and
    the confident/uncertain regions stay separable.
    """
    L = reach_config.skill_horizon
    H = reach_config.goal_horizon
    rows = []
    rng = np.random.default_rng(seed)
    for traj in trajectories:
        sg = None
        for t, state in enumerate(traj.states[:-1]):
            sub_seed = int(rng.integers(0, 2**31 - 1))
            subgoals = sample_subgoals(cvae_params, cvae_config, state,
                                       n_subgoal_samples, sub_seed)
            task_u = task_uncertainty(subgoals)
            if t % L == 0:
                sg = traj.states[min(t + H, len(traj.states) - 1)]
            policy_u = policy_uncertainty(
                first_step_deltas(ensemble, reach_config, state, sg))
            rows.append({"trajectory": traj.id, "step": t,
                         "policy_u": policy_u, "task_u": task_u})
    return rows


def ood_probe_states(config: worldsim.WorldConfig, n: int, seed: int,
                     ) -> list[np.ndarray]:
    """Synthetic off-distribution states: closed empty gripper in the lower
    workspace corners, a region the demonstrations never visit."""
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(n):
        s = worldsim.reset(config, int(rng.integers(0, 2**31 - 1))).copy()
        s[0] = rng.uniform(0.0, 0.15) if rng.random() < 0.5 else rng.uniform(0.85, 1.0)
        s[1] = rng.uniform(0.0, 0.15)
        s[2] = 1.0
        states.append(s)
    return states


def monitor_policy_uncertainty(state: np.ndarray,
                               cvae_params: ParamSet, cvae_config: CvaeConfig,
                               ensemble: list[ParamSet],
                               reach_config: ReachConfig,
                               n_subgoal_samples: int, seed: int) -> float:
    """Execution-style policy uncertainty at an arbitrary state: committed
    CVAE subgoal, fresh plan, disagreement over the immediate next action."""
    subs = sample_subgoals(cvae_params, cvae_config, state, n_subgoal_samples,
                           seed)
    sg = committed_subgoal(subs, None)
    return policy_uncertainty(first_step_deltas(ensemble, reach_config, state, sg))


def calibrate(trajectories: list[Trajectory],
              cvae_params: ParamSet, cvae_config: CvaeConfig,
              ensemble: list[ParamSet], reach_config: ReachConfig,
              world_config: worldsim.WorldConfig,
              n_subgoal_samples: int = 1024, seed: int = 0,
              n_ood_probes: int = 20) -> CalibrationReport:
    """Largest-gap-midpoint thresholds from held-out trajectory traces.

    Trajectories are truncated at first task success: the post-success hold
    tail forms its own tight high-disagreement cluster that would swallow
    the largest gap, and gating never applies after the subtask is done.

    Gamma is the midpoint between the highest in-distribution policy
    uncertainty and the lowest over `n_ood_probes` synthetic
    off-distribution states.  A trace drawn only from the demonstration
    distribution has no out-of-distribution cluster, so a within-trace gap
    search flags ordinary critical states (measured: spurious requests at
    every placement); and the probe cluster itself is wide, so an unlabeled
    gap search lands inside it.  The labels pin the boundary between the
    regimes.

    Omega is likewise labeled: task-uncertainty values within L steps of a
    trace's first grasp are branch readings, the rest background.  Omega is
    the midpoint between the background maximum and the weakest trace's
    branch peak.  An unlabeled gap search fails here because the branch
    peak has an approach shoulder: the largest gap can land between peak
    and shoulder, above the weaker per-episode peaks, and a robot that
    misses its one branch reading carries the object to the midline and
    times out with no request.
    """
    if len(trajectories) < 2:
        raise ContractError("calibration needs at least 2 held-out trajectories")
    trimmed = []
    for traj in trajectories:
        cut = len(traj.states)
        for i, s in enumerate(traj.states):
            if i >= 2 and worldsim.task_success(world_config, s, traj.task):
                cut = i + 1
                break
        if cut == len(traj.states):
            trimmed.append(traj)
        else:
            trimmed.append(Trajectory(
                id=traj.id, world_hash=traj.world_hash, task=traj.task,
                seed=traj.seed, states=traj.states[:cut],
                actions=traj.actions[:cut - 1],
                annotations=traj.annotations[:cut - 1], success=traj.success))
    rows = uncertainty_traces(trimmed, cvae_params, cvae_config,
                              ensemble, reach_config, n_subgoal_samples, seed)
    id_max = max(r["policy_u"] for r in rows)
    probe_rng = np.random.default_rng(seed + 1)
    probe_values = []
    for i, state in enumerate(ood_probe_states(world_config, n_ood_probes,
                                               seed + 2)):
        pu = monitor_policy_uncertainty(
            state, cvae_params, cvae_config, ensemble, reach_config,
            n_subgoal_samples, int(probe_rng.integers(0, 2**31 - 1)))
        probe_values.append(pu)
        rows.append({"trajectory": "ood_probe", "step": i,
                     "policy_u": pu, "task_u": None})
    if min(probe_values) <= id_max:
        raise CalibrationError(
            "off-distribution probes overlap the in-distribution trace; "
            "no separable policy-uncertainty threshold exists")
    gamma = (id_max + min(probe_values)) / 2.0

    L = reach_config.skill_horizon
    first_attach = {}
    for traj in trimmed:
        for i, s in enumerate(traj.states):
            if worldsim.object_attached(s, 0):
                first_attach[traj.id] = i
                break
    background, branch_peak = [], {}
    for r in rows:
        if r["task_u"] is None:
            continue
        a = first_attach.get(r["trajectory"])
        if a is not None and abs(r["step"] - a) <= L:
            branch_peak[r["trajectory"]] = max(
                branch_peak.get(r["trajectory"], 0.0), r["task_u"])
        else:
            background.append(r["task_u"])
    if not branch_peak:
        raise CalibrationError(
            "no calibration trajectory ever grasps the object; "
            "cannot label branch task-uncertainty readings")
    weakest_peak = min(branch_peak.values())
    if not background or weakest_peak <= max(background):
        raise CalibrationError(
            "branch task-uncertainty readings overlap the background; "
            "no separable task-uncertainty threshold exists")
    omega = (max(background) + weakest_peak) / 2.0
    return CalibrationReport(gamma=gamma, omega=omega, rows=rows)
