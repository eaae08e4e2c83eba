"""Ensemble of recurrent subgoal-reaching policies trained by behavioral cloning.

Each member embeds the state and the subgoal through separate input MLPs,
concatenates the embeddings, and recurs an LSTM for the skill horizon L,
emitting a continuous end-effector delta and gripper logits per step.
Member 0 acts; the others exist for the disagreement estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import worldsim
from .demo_corpus import Corpus, TrainingWindow, sample_windows
from .nn import (
    AdamState, ContractError, MlpSpec, ParamSet, adam_step, forward_lstm_step,
    forward_mlp, gradients_of, init_lstm, init_mlp,
)
from .tensor import Tensor, concat, logsumexp

GRIP_CLASSES = (worldsim.GRIP_CLOSE, worldsim.GRIP_HOLD, worldsim.GRIP_OPEN)


def gripper_class(cmd: float) -> int:
    return int(round(cmd)) + 1


@dataclass(frozen=True)
class ReachConfig:
    state_dim: int
    ensemble_size: int = 5          # K
    skill_horizon: int = 6          # L
    goal_horizon: int = 12          # H, window sampling target for s_g
    delta_scale: float = 0.05       # network predicts delta / delta_scale
    lstm_hidden: int = 64
    embed_width: int = 64
    embed_depth: int = 2
    out_width: int = 64
    out_depth: int = 2
    batch_size: int = 16
    train_iters: int = 3000
    lr: float = 1e-3
    layer_norm: bool = True
    gap_jitter: bool = True         # vary the goal gap in [L, H] per window
    stationary_frac: float = 0.1    # share of hold-at-goal windows

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ContractError("ensemble needs K >= 2")
        if self.skill_horizon < 1 or self.skill_horizon > self.goal_horizon:
            raise ContractError("need 1 <= L <= H")

    @property
    def embed_spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(self.state_dim, *([self.embed_width] * self.embed_depth)),
            activation="leaky_relu", layer_norm=self.layer_norm,
            output_activation="leaky_relu",
        )

    @property
    def out_spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(self.lstm_hidden, *([self.out_width] * (self.out_depth - 1)), 5),
            activation="leaky_relu", output_activation="identity",
            layer_norm=self.layer_norm,
        )


@dataclass
class ActionPrediction:
    delta: np.ndarray   # (2,)
    logits: np.ndarray  # (3,) close / hold / open

    def __post_init__(self):
        if not (np.all(np.isfinite(self.delta)) and np.all(np.isfinite(self.logits))):
            raise ValueError("non-finite action prediction")


def init_member(config: ReachConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    params = init_mlp(config.embed_spec, rng, prefix="s_mlp.")
    for src in (init_mlp(config.embed_spec, rng, prefix="g_mlp."),
                init_lstm(2 * config.embed_width, config.lstm_hidden, rng, prefix="core."),
                init_mlp(config.out_spec, rng, prefix="out.")):
        for path, t in src.items():
            params[path] = t
    return params


def _rollout_t(params: ParamSet, config: ReachConfig, s: Tensor, s_g: Tensor,
               steps: int) -> list[Tensor]:
    """Batched open-loop rollout; returns one (batch, 5) output per step."""
    se = forward_mlp(params, config.embed_spec, s, prefix="s_mlp.")
    ge = forward_mlp(params, config.embed_spec, s_g, prefix="g_mlp.")
    x = concat([se, ge], axis=1)
    batch = s.shape[0]
    h = Tensor(np.zeros((batch, config.lstm_hidden)))
    c = Tensor(np.zeros((batch, config.lstm_hidden)))
    outputs = []
    for _ in range(steps):
        h, c = forward_lstm_step(params, x, h, c, prefix="core.")
        outputs.append(forward_mlp(params, config.out_spec, h, prefix="out."))
    return outputs


def rollout_actions(params: ParamSet, config: ReachConfig, s: np.ndarray,
                    s_g: np.ndarray, steps: int | None = None) -> list[ActionPrediction]:
    """Action predictions for the next `steps` ticks toward s_g (fresh LSTM state)."""
    steps = config.skill_horizon if steps is None else steps
    s2 = np.atleast_2d(np.asarray(s, dtype=np.float64))
    g2 = np.atleast_2d(np.asarray(s_g, dtype=np.float64))
    outs = _rollout_t(params, config, Tensor(s2), Tensor(g2), steps)
    return [ActionPrediction(delta=o.data[0, 0:2] * config.delta_scale,
                             logits=o.data[0, 2:5].copy())
            for o in outs]


def bc_loss(params: ParamSet, config: ReachConfig, windows: list[TrainingWindow],
            ) -> Tensor:
    """MSE on deltas + cross-entropy on gripper class, summed over the L steps."""
    L = config.skill_horizon
    for w in windows:
        if w.actions.shape[0] != L:
            raise ContractError(f"window has {w.actions.shape[0]} actions, expected L={L}")
    s = Tensor(np.stack([w.state for w in windows]))
    s_g = Tensor(np.stack([w.subgoal for w in windows]))
    outs = _rollout_t(params, config, s, s_g, L)
    total = None
    for t, out in enumerate(outs):
        target_delta = np.stack([w.actions[t, 0:2] for w in windows]) / config.delta_scale
        classes = np.array([gripper_class(w.actions[t, 2]) for w in windows])
        derr = out[:, 0:2] - Tensor(target_delta)
        mse = (derr * derr).sum(axis=1)
        logits = out[:, 2:5]
        picked = logits[np.arange(len(windows)), classes]
        ce = logsumexp(logits, axis=1) - picked
        step_loss = mse + ce
        total = step_loss if total is None else total + step_loss
    return total.mean()


def train_member(corpus: Corpus, config: ReachConfig, seed: int) -> ParamSet:
    params = init_member(config, seed).require_grad()
    opt = AdamState(lr=config.lr)
    rng = np.random.default_rng(seed + 1)
    for _ in range(config.train_iters):
        windows = sample_windows(
            corpus, config.goal_horizon, config.skill_horizon,
            config.batch_size, seed=int(rng.integers(0, 2**31 - 1)),
            gap_jitter=config.gap_jitter,
            stationary_frac=config.stationary_frac)
        params.zero_grad()
        loss = bc_loss(params, config, windows)
        loss.backward()
        adam_step(opt, params, gradients_of(params))
    for _, t in params.items():
        t.requires_grad = False
    return params


def train_ensemble(corpus: Corpus, config: ReachConfig, seeds: list[int],
                   ) -> list[ParamSet]:
    if len(seeds) != config.ensemble_size:
        raise ContractError(f"need {config.ensemble_size} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise ContractError("duplicate ensemble seeds would collapse the ensemble")
    return [train_member(corpus, config, seed) for seed in seeds]


# ---------------------------------------------------------------------------
# Execution-time plans: all K member predictions for one (s, s_g) window.


@dataclass
class ActionPlan:
    deltas: np.ndarray   # (K, L, 2)
    logits: np.ndarray   # (K, L, 3)

    @property
    def horizon(self) -> int:
        return self.deltas.shape[1]


def plan_window(ensemble: list[ParamSet], config: ReachConfig, s: np.ndarray,
                s_g: np.ndarray) -> ActionPlan:
    deltas, logits = [], []
    for params in ensemble:
        preds = rollout_actions(params, config, s, s_g)
        deltas.append(np.stack([p.delta for p in preds]))
        logits.append(np.stack([p.logits for p in preds]))
    return ActionPlan(deltas=np.stack(deltas), logits=np.stack(logits))


def act(plan: ActionPlan, world_config: worldsim.WorldConfig, step_index: int,
        ) -> np.ndarray:
    """Member-0 action at step_index; argmax gripper, delta clipped to env bounds."""
    if step_index >= plan.horizon:
        raise ContractError(
            f"step_index {step_index} >= L={plan.horizon}: resample the subgoal first")
    delta = plan.deltas[0, step_index]
    grip = GRIP_CLASSES[int(np.argmax(plan.logits[0, step_index]))]
    return worldsim.clip_action(
        world_config, worldsim.make_action(delta[0], delta[1], grip))


def member_deltas_at(plan: ActionPlan, step_index: int) -> np.ndarray:
    """(K, 2) continuous deltas across members for the disagreement estimator."""
    if step_index >= plan.horizon:
        raise ContractError(f"step_index {step_index} >= L={plan.horizon}")
    return plan.deltas[:, step_index, :]


def first_step_deltas(ensemble: list[ParamSet], config: ReachConfig,
                      s: np.ndarray, s_g: np.ndarray) -> np.ndarray:
    """(K, 2) step-0 deltas without rolling the LSTM past the first step.

    Identical to member_deltas_at(plan_window(...), 0): the recurrence is
    causal, so later steps cannot affect the first output.  Monitoring
    evaluates this every tick, so skipping the rest of the window matters.
    """
    return np.stack([rollout_actions(p, config, s, s_g, steps=1)[0].delta
                     for p in ensemble])


# ---------------------------------------------------------------------------
# Flat stochastic ensemble (ablation without hierarchy).  One reactive MLP per
# member: state -> (delta mean, delta log-std, gripper logits).


@dataclass(frozen=True)
class FlatConfig:
    state_dim: int
    ensemble_size: int = 5
    delta_scale: float = 0.05
    width: int = 64
    depth: int = 3
    batch_size: int = 16
    train_iters: int = 1500
    lr: float = 1e-3
    layer_norm: bool = True

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(self.state_dim, *([self.width] * self.depth), 7),
            activation="leaky_relu", output_activation="identity",
            layer_norm=self.layer_norm,
        )


def init_flat_member(config: FlatConfig, seed: int) -> ParamSet:
    return init_mlp(config.spec, np.random.default_rng(seed))


def flat_forward(params: ParamSet, config: FlatConfig, s: np.ndarray,
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    out = forward_mlp(params, config.spec, Tensor(np.atleast_2d(s))).data
    mean = out[:, 0:2] * config.delta_scale
    log_std = np.clip(out[:, 2:4], -6.0, 1.0) + np.log(config.delta_scale)
    logits = out[:, 4:7]
    return mean, log_std, logits


def flat_nll_loss(params: ParamSet, config: FlatConfig, states: np.ndarray,
                  actions: np.ndarray) -> Tensor:
    """Gaussian NLL on deltas + CE on gripper over (state, action) pairs."""
    out = forward_mlp(params, config.spec, Tensor(states))
    mean = out[:, 0:2]
    log_std = out[:, 2:4]
    logits = out[:, 4:7]
    target = Tensor(actions[:, 0:2] / config.delta_scale)
    inv_var = (log_std * -2.0).exp()
    err = target - mean
    nll = ((err * err) * inv_var * 0.5 + log_std).sum(axis=1)
    classes = np.array([gripper_class(a) for a in actions[:, 2]])
    picked = logits[np.arange(len(classes)), classes]
    ce = logsumexp(logits, axis=1) - picked
    return (nll + ce).mean()


def train_flat_ensemble(corpus: Corpus, config: FlatConfig, seeds: list[int],
                        ) -> list[ParamSet]:
    if len(set(seeds)) != len(seeds):
        raise ContractError("duplicate ensemble seeds would collapse the ensemble")
    states = np.stack([s for tr in corpus.trajectories for s in tr.states[:-1]])
    actions = np.stack([a for tr in corpus.trajectories for a in tr.actions])
    members = []
    for seed in seeds:
        params = init_flat_member(config, seed).require_grad()
        opt = AdamState(lr=config.lr)
        rng = np.random.default_rng(seed + 1)
        for _ in range(config.train_iters):
            idx = rng.integers(0, len(states), size=config.batch_size)
            params.zero_grad()
            loss = flat_nll_loss(params, config, states[idx], actions[idx])
            loss.backward()
            adam_step(opt, params, gradients_of(params))
        for _, t in params.items():
            t.requires_grad = False
        members.append(params)
    return members


def flat_sample_actions(params: ParamSet, config: FlatConfig, s: np.ndarray,
                        n: int, seed: int) -> np.ndarray:
    """n stochastic delta samples at state s; feeds the flat task-uncertainty proxy."""
    mean, log_std, _ = flat_forward(params, config, s)
    rng = np.random.default_rng(seed)
    return mean[0] + np.exp(log_std[0]) * rng.standard_normal((n, 2))
