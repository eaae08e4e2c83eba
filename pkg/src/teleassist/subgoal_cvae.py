"""High-level subgoal predictor: conditional VAE over states H steps ahead."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .demo_corpus import Corpus, TrainingWindow, sample_windows
from .nn import (
    AdamState, MlpSpec, ParamSet, adam_step, forward_mlp, gradients_of, init_mlp,
)
from .tensor import Tensor, TensorError


@dataclass(frozen=True)
class CvaeConfig:
    state_dim: int
    latent_dim: int = 16
    hidden_width: int = 128
    hidden_depth: int = 3
    goal_horizon: int = 12          # H: subgoal lookahead in steps
    skill_horizon: int = 6          # L: used only for window sampling symmetry
    # KL weight: at this state dimensionality a weak prior leaves decoder
    # holes that starve one placement mode at the branch, while a strong
    # one blurs subgoals and widens the uncertain window until requests
    # fire mid-approach; 0.03 with the longer schedule keeps both branch
    # modes above a fifth of prior samples while the branch uncertainty
    # peak stays well clear of the calibrated task threshold
    beta: float = 0.03
    batch_size: int = 16
    train_iters: int = 10000
    lr: float = 1e-3
    layer_norm: bool = True

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent dim must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.goal_horizon < 1:
            raise ValueError("goal horizon must be >= 1")

    @property
    def encoder_spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(2 * self.state_dim,
                   *([self.hidden_width] * self.hidden_depth),
                   2 * self.latent_dim),
            activation="leaky_relu",
            output_activation="identity",
            layer_norm=self.layer_norm,
        )

    @property
    def decoder_spec(self) -> MlpSpec:
        return MlpSpec(
            sizes=(self.state_dim + self.latent_dim,
                   *([self.hidden_width] * self.hidden_depth),
                   self.state_dim),
            activation="leaky_relu",
            output_activation="identity",
            layer_norm=self.layer_norm,
        )


@dataclass
class LatentGaussian:
    mean: np.ndarray      # (batch, latent_dim)
    log_std: np.ndarray   # (batch, latent_dim)

    def __post_init__(self):
        if not np.all(np.isfinite(self.log_std)):
            raise ValueError("non-finite log-std")


def init_cvae(config: CvaeConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    params = init_mlp(config.encoder_spec, rng, prefix="enc.")
    dec = init_mlp(config.decoder_spec, rng, prefix="dec.")
    for path, t in dec.items():
        params[path] = t
    return params


def _check_state(config: CvaeConfig, x: np.ndarray, what: str):
    if x.shape[-1] != config.state_dim:
        raise TensorError(f"{what} has width {x.shape[-1]}, expected {config.state_dim}")


def _encode_t(params: ParamSet, config: CvaeConfig, s: Tensor, s_g: Tensor,
              ) -> tuple[Tensor, Tensor]:
    from .tensor import concat
    out = forward_mlp(params, config.encoder_spec, concat([s, s_g], axis=1), prefix="enc.")
    mean = out[:, :config.latent_dim]
    log_std = out[:, config.latent_dim:]
    return mean, log_std


def _decode_t(params: ParamSet, config: CvaeConfig, s: Tensor, z: Tensor) -> Tensor:
    from .tensor import concat
    return forward_mlp(params, config.decoder_spec, concat([s, z], axis=1), prefix="dec.")


def encode(params: ParamSet, config: CvaeConfig, s: np.ndarray, s_g: np.ndarray,
           ) -> LatentGaussian:
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    s_g = np.atleast_2d(np.asarray(s_g, dtype=np.float64))
    _check_state(config, s, "state")
    _check_state(config, s_g, "subgoal")
    mean, log_std = _encode_t(params, config, Tensor(s), Tensor(s_g))
    return LatentGaussian(mean=mean.data, log_std=log_std.data)


def decode(params: ParamSet, config: CvaeConfig, s: np.ndarray, z: np.ndarray,
           ) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    _check_state(config, s, "state")
    if z.shape[-1] != config.latent_dim:
        raise TensorError(f"latent has width {z.shape[-1]}, expected {config.latent_dim}")
    if s.shape[0] == 1 and z.shape[0] > 1:
        s = np.repeat(s, z.shape[0], axis=0)
    return _decode_t(params, config, Tensor(s), Tensor(z)).data


def kl_to_unit_gaussian(mean: Tensor, log_std: Tensor) -> Tensor:
    """KL(N(mean, diag exp(2*log_std)) || N(0, I)), summed over latent dims."""
    var = (log_std * 2.0).exp()
    per_dim = (mean * mean + var - 1.0) * 0.5 - log_std
    return per_dim.sum(axis=1)


def cvae_loss(params: ParamSet, config: CvaeConfig, windows: list[TrainingWindow],
              rng: np.random.Generator) -> tuple[Tensor, dict]:
    s = Tensor(np.stack([w.state for w in windows]))
    s_g = Tensor(np.stack([w.subgoal for w in windows]))
    mean, log_std = _encode_t(params, config, s, s_g)
    eps = Tensor(rng.standard_normal(mean.shape))
    z = mean + log_std.exp() * eps
    recon = _decode_t(params, config, s, z)
    err = recon - s_g
    recon_loss = (err * err).sum(axis=1).mean()
    kl = kl_to_unit_gaussian(mean, log_std).mean()
    total = recon_loss + config.beta * kl
    return total, {"recon": recon_loss.item(), "kl": kl.item(), "total": total.item()}


def sample_subgoals(params: ParamSet, config: CvaeConfig, s: np.ndarray, n: int,
                    seed: int) -> np.ndarray:
    """n prior-sample decodes at state s; returns (n, state_dim)."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, config.latent_dim))
    return decode(params, config, np.atleast_2d(s), z)


def committed_subgoal(samples: np.ndarray, previous: np.ndarray | None,
                      cluster_radius: float = 0.1) -> np.ndarray:
    """Execution-time subgoal from prior samples, committed to one mode.

    Independent draws flip between branch modes from one replanning point to
    the next, which makes the executing policy dither.  Instead the sample
    nearest the previously committed subgoal (eef distance) anchors the
    choice, and averaging its local cluster removes single-sample noise.
    With no previous subgoal the first sample is the anchor.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise TensorError("need a (n, state_dim) sample array")
    eef = samples[:, 0:2]
    if previous is None:
        anchor = eef[0]
    else:
        anchor = eef[np.argmin(np.linalg.norm(eef - previous[0:2], axis=1))]
    near = np.linalg.norm(eef - anchor, axis=1) < cluster_radius
    return samples[near].mean(axis=0)


def train_cvae(corpus: Corpus, config: CvaeConfig, seed: int,
               ) -> tuple[ParamSet, list[dict]]:
    """Adam training over sampled windows; returns params and a loss log."""
    params = init_cvae(config, seed).require_grad()
    opt = AdamState(lr=config.lr)
    rng = np.random.default_rng(seed + 1)
    log = []
    for it in range(config.train_iters):
        windows = sample_windows(
            corpus, config.goal_horizon, config.skill_horizon,
            config.batch_size, seed=int(rng.integers(0, 2**31 - 1)))
        params.zero_grad()
        loss, parts = cvae_loss(params, config, windows, rng)
        loss.backward()
        adam_step(opt, params, gradients_of(params))
        if it % 50 == 0 or it == config.train_iters - 1:
            log.append({"iteration": it, **parts})
    for _, t in params.items():
        t.requires_grad = False
    return params, log


def loss_log_csv(log: list[dict]) -> str:
    lines = ["iteration,recon,kl,total"]
    for row in log:
        lines.append(f"{row['iteration']},{row['recon']:.10g},{row['kl']:.10g},{row['total']:.10g}")
    return "\n".join(lines) + "\n"
