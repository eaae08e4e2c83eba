"""Behavioral-cloning probe over collected corpora.

Trains a plain reactive policy (state -> action, no goal conditioning) on a
corpus and measures rollout success, so corpora collected under different
fleet configurations can be compared by the quality of policies they train.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import worldsim
from .demo_corpus import Corpus
from .nn import (
    AdamState, ContractError, MlpSpec, ParamSet, adam_step, forward_mlp,
    gradients_of, init_mlp,
)
from .reach_ensemble import GRIP_CLASSES, gripper_class
from .tensor import Tensor, logsumexp


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class BcConfig:
    state_dim: int
    delta_scale: float = 0.05
    width: int = 64
    depth: int = 3
    batch_size: int = 16
    train_iters: int = 2000
    lr: float = 1e-3
    layer_norm: bool = True

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(self.state_dim, *([self.width] * self.depth), 5),
            activation="leaky_relu", output_activation="identity",
            layer_norm=self.layer_norm,
        )


def _flatten(corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    if not corpus.trajectories:
        raise EvalError("empty corpus")
    states = np.stack([s for tr in corpus.trajectories for s in tr.states[:-1]])
    actions = np.stack([a for tr in corpus.trajectories for a in tr.actions])
    return states, actions


def bc_loss(params: ParamSet, config: BcConfig, states: np.ndarray,
            actions: np.ndarray) -> Tensor:
    """MSE on scaled deltas + cross-entropy on the gripper class."""
    out = forward_mlp(params, config.spec, Tensor(states))
    err = out[:, 0:2] - Tensor(actions[:, 0:2] / config.delta_scale)
    mse = (err * err).sum(axis=1)
    logits = out[:, 2:5]
    classes = np.array([gripper_class(a) for a in actions[:, 2]])
    picked = logits[np.arange(len(classes)), classes]
    ce = logsumexp(logits, axis=1) - picked
    return (mse + ce).mean()


def train_bc(corpus: Corpus, seed: int, config: BcConfig | None = None,
             ) -> ParamSet:
    config = config or BcConfig(state_dim=corpus.state_dim)
    if config.state_dim != corpus.state_dim:
        raise ContractError(
            f"config state_dim {config.state_dim} != corpus {corpus.state_dim}")
    states, actions = _flatten(corpus)
    params = init_mlp(config.spec, np.random.default_rng(seed)).require_grad()
    opt = AdamState(lr=config.lr)
    rng = np.random.default_rng(seed + 1)
    for _ in range(config.train_iters):
        idx = rng.integers(0, len(states), size=config.batch_size)
        params.zero_grad()
        loss = bc_loss(params, config, states[idx], actions[idx])
        loss.backward()
        adam_step(opt, params, gradients_of(params))
    for _, t in params.items():
        t.requires_grad = False
    return params


def bc_action(params: ParamSet, config: BcConfig,
              world_config: worldsim.WorldConfig, state: np.ndarray,
              ) -> np.ndarray:
    out = forward_mlp(params, config.spec,
                      Tensor(np.atleast_2d(state))).data[0]
    delta = out[0:2] * config.delta_scale
    grip = GRIP_CLASSES[int(np.argmax(out[2:5]))]
    return worldsim.clip_action(
        world_config, worldsim.make_action(delta[0], delta[1], grip))


def eval_policy(action_fn, world_config: worldsim.WorldConfig,
                task: worldsim.TaskSpec, n_rollouts: int, seed: int,
                horizon: int | None = None, obs_noise: float = 0.0) -> float:
    """Fraction of seeded rollouts reaching task success within the horizon.

    `obs_noise` perturbs the observation handed to the policy (Gaussian on
    the eef and object positions); the dynamics stay exact.  At noise 0 the
    probe saturates on this small world regardless of corpus size, so
    corpus comparisons use a nonzero noise that stresses coverage.
    """
    if n_rollouts < 1:
        raise EvalError("need at least 1 rollout")
    if obs_noise < 0:
        raise EvalError("obs_noise must be >= 0")
    task.validate(world_config)
    horizon = world_config.horizon if horizon is None else horizon
    rng = np.random.default_rng(seed)
    successes = 0
    for _ in range(n_rollouts):
        state = worldsim.reset(world_config, int(rng.integers(0, 2**31 - 1)))
        for _ in range(horizon):
            obs = state
            if obs_noise > 0.0:
                obs = state.copy()
                obs[0:2] += rng.normal(0.0, obs_noise, 2)
                for k in range(world_config.num_objects):
                    base = 3 + 3 * k
                    obs[base:base + 2] += rng.normal(0.0, obs_noise, 2)
            state = worldsim.step(world_config, state, action_fn(obs))
            if worldsim.task_success(world_config, state, task):
                successes += 1
                break
    return successes / n_rollouts


def eval_bc(params: ParamSet, config: BcConfig,
            world_config: worldsim.WorldConfig, task: worldsim.TaskSpec,
            n_rollouts: int, seed: int, horizon: int | None = None,
            obs_noise: float = 0.0) -> float:
    return eval_policy(
        lambda s: bc_action(params, config, world_config, s),
        world_config, task, n_rollouts, seed, horizon, obs_noise)


@dataclass
class EvalReport:
    corpus_id: str
    n_trajectories: int
    success_mean: float
    success_std: float
    n_rollouts: int
    train_seeds: list[int]
    per_seed: list[float]
    metadata: dict

    def __post_init__(self):
        if not (0.0 <= self.success_mean <= 1.0) or self.success_std < 0:
            raise EvalError("success rate out of range")

    def to_dict(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "n_trajectories": self.n_trajectories,
            "success_mean": self.success_mean,
            "success_std": self.success_std,
            "n_rollouts": self.n_rollouts,
            "train_seeds": self.train_seeds,
            "per_seed": self.per_seed,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def evaluate_corpus(corpus: Corpus, corpus_id: str, task: worldsim.TaskSpec,
                    train_seeds: list[int], n_rollouts: int, eval_seed: int,
                    config: BcConfig | None = None, obs_noise: float = 0.0,
                    ) -> EvalReport:
    """Mean +/- std BC success over independent training seeds."""
    if len(train_seeds) < 1:
        raise EvalError("need at least 1 training seed")
    config = config or BcConfig(state_dim=corpus.state_dim)
    rates = []
    for seed in train_seeds:
        params = train_bc(corpus, seed, config)
        rates.append(eval_bc(params, config, corpus.world_config, task,
                             n_rollouts, eval_seed, obs_noise=obs_noise))
    return EvalReport(
        corpus_id=corpus_id,
        n_trajectories=len(corpus),
        success_mean=float(np.mean(rates)),
        success_std=float(np.std(rates)),
        n_rollouts=n_rollouts,
        train_seeds=list(train_seeds),
        per_seed=[float(r) for r in rates],
        metadata=dict(corpus.metadata),
    )


def format_report_table(reports: list[EvalReport]) -> str:
    """Aligned text table comparing corpora by BC success."""
    header = f"{'corpus':<24} {'demos':>6} {'success':>16} {'rollouts':>9}"
    lines = [header, "-" * len(header)]
    for r in reports:
        rate = f"{100 * r.success_mean:.1f} +/- {100 * r.success_std:.1f}"
        lines.append(f"{r.corpus_id:<24} {r.n_trajectories:>6} {rate:>16} "
                     f"{r.n_rollouts:>9}")
    return "\n".join(lines) + "\n"
