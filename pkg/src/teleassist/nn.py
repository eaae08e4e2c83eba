"""Parameter containers, MLP/LSTM layers, Adam, and checkpoint files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, TensorError, NumericError, concat

CKPT_FORMAT_VERSION = 1
_LN_EPS = 1e-5

ACTIVATIONS = ("leaky_relu", "tanh", "identity")


class ContractError(ValueError):
    """Caller violated an operation precondition."""


class ParamSet:
    """Named map from parameter path to Tensor.

    Iteration is always lexicographic by path, so serialization order and
    update order are stable across runs.
    """

    def __init__(self, params: dict[str, Tensor] | None = None):
        self._params: dict[str, Tensor] = dict(params or {})

    def __getitem__(self, path: str) -> Tensor:
        try:
            return self._params[path]
        except KeyError:
            raise KeyError(f"no parameter at path {path!r}") from None

    def __setitem__(self, path: str, value: Tensor):
        if not isinstance(value, Tensor):
            value = Tensor(value)
        self._params[path] = value

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def paths(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for path in self.paths():
            yield path, self._params[path]

    def require_grad(self):
        for _, t in self.items():
            t.requires_grad = True
        return self

    def zero_grad(self):
        for _, t in self.items():
            t.grad = None

    def copy(self) -> "ParamSet":
        return ParamSet({k: Tensor(v.data.copy()) for k, v in self._params.items()})

    def l2_distance(self, other: "ParamSet") -> float:
        if self.paths() != other.paths():
            raise ContractError("parameter sets have different paths")
        sq = 0.0
        for path, t in self.items():
            sq += float(np.sum((t.data - other[path].data) ** 2))
        return float(np.sqrt(sq))


def gradients_of(params: ParamSet) -> ParamSet:
    """Gradients after a backward pass; unreachable parameters get zeros."""
    out = ParamSet()
    for path, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        out[path] = Tensor(g.copy())
    return out


# ---------------------------------------------------------------------------
# MLP


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes including input and output dims.

    `activation` follows every affine layer unless `output_activation`
    overrides the last one.  Layer normalization, when enabled, sits after
    each hidden affine (never the final layer), before the activation.
    """

    sizes: tuple[int, ...]
    activation: str = "leaky_relu"
    leaky_slope: float = 0.2
    output_activation: str | None = None
    layer_norm: bool = False

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ContractError("MlpSpec needs at least input and output sizes")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.output_activation is not None and self.output_activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.output_activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1


def _apply_activation(x: Tensor, name: str, slope: float) -> Tensor:
    if name == "leaky_relu":
        return x.leaky_relu(slope)
    if name == "tanh":
        return x.tanh()
    return x


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str = "") -> ParamSet:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    params = ParamSet()
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.sizes[i], spec.sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{prefix}layer{i}.w"] = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)))
        params[f"{prefix}layer{i}.b"] = Tensor(np.zeros(fan_out))
        if spec.layer_norm and i < spec.n_layers - 1:
            params[f"{prefix}layer{i}.ln_g"] = Tensor(np.ones(fan_out))
            params[f"{prefix}layer{i}.ln_b"] = Tensor(np.zeros(fan_out))
    return params


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + _LN_EPS).sqrt() * gain + bias


def forward_mlp(params: ParamSet, spec: MlpSpec, x: Tensor, prefix: str = "") -> Tensor:
    if x.data.ndim != 2:
        raise TensorError(f"mlp input must be 2-D (batch, features), got {x.shape}")
    if x.data.shape[1] != spec.sizes[0]:
        raise TensorError(
            f"mlp layer0 expects input width {spec.sizes[0]}, got {x.data.shape[1]}"
        )
    h = x
    for i in range(spec.n_layers):
        w = params[f"{prefix}layer{i}.w"]
        b = params[f"{prefix}layer{i}.b"]
        if w.shape != (spec.sizes[i], spec.sizes[i + 1]):
            raise TensorError(
                f"mlp layer{i} weight shape {w.shape} != {(spec.sizes[i], spec.sizes[i + 1])}"
            )
        h = h @ w + b
        last = i == spec.n_layers - 1
        if spec.layer_norm and not last:
            h = layer_norm(h, params[f"{prefix}layer{i}.ln_g"], params[f"{prefix}layer{i}.ln_b"])
        act = spec.output_activation if (last and spec.output_activation is not None) else spec.activation
        h = _apply_activation(h, act, spec.leaky_slope)
    return h


# ---------------------------------------------------------------------------
# LSTM


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator,
              prefix: str = "") -> ParamSet:
    params = ParamSet()
    bound = 1.0 / np.sqrt(input_dim)
    params[f"{prefix}lstm.w_ih"] = Tensor(rng.uniform(-bound, bound, (input_dim, 4 * hidden_dim)))
    bound = 1.0 / np.sqrt(hidden_dim)
    params[f"{prefix}lstm.w_hh"] = Tensor(rng.uniform(-bound, bound, (hidden_dim, 4 * hidden_dim)))
    params[f"{prefix}lstm.b"] = Tensor(np.zeros(4 * hidden_dim))
    return params


def forward_lstm_step(params: ParamSet, x: Tensor, hidden: Tensor, cell: Tensor,
                      prefix: str = "") -> tuple[Tensor, Tensor]:
    """One gated recurrence step.  Gate layout along the last axis: i, f, g, o."""
    if not np.all(np.isfinite(x.data)):
        raise NumericError("non-finite lstm input")
    w_ih = params[f"{prefix}lstm.w_ih"]
    w_hh = params[f"{prefix}lstm.w_hh"]
    b = params[f"{prefix}lstm.b"]
    hdim = w_hh.shape[0]
    if hidden.data.shape[-1] != hdim or cell.data.shape[-1] != hdim:
        raise TensorError(
            f"hidden/cell width must be {hdim}, got {hidden.shape}/{cell.shape}"
        )
    gates = x @ w_ih + hidden @ w_hh + b
    i = gates[:, 0 * hdim:1 * hdim].sigmoid()
    f = gates[:, 1 * hdim:2 * hdim].sigmoid()
    g = gates[:, 2 * hdim:3 * hdim].tanh()
    o = gates[:, 3 * hdim:4 * hdim].sigmoid()
    cell_next = f * cell + i * g
    hidden_next = o * cell_next.tanh()
    return hidden_next, cell_next


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: ParamSet, grads: ParamSet) -> ParamSet:
    """Bias-corrected Adam update, in place on `params`."""
    if params.paths() != grads.paths():
        raise ContractError("grads and params must have identical key sets")
    state.step += 1
    t = state.step
    for path, p in params.items():
        g = grads[path].data
        if g.shape != p.data.shape:
            raise ContractError(f"grad shape mismatch at {path!r}")
        m = state.m.get(path)
        if m is None:
            m = state.m[path] = np.zeros_like(p.data)
            state.v[path] = np.zeros_like(p.data)
        v = state.v[path]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Checkpoints: JSON header line + little-endian f64 blob in header path order.


def save_checkpoint(path, params: ParamSet, meta: dict | None = None):
    header = {
        "format_version": CKPT_FORMAT_VERSION,
        "params": [{"path": p, "shape": list(t.shape)} for p, t in params.items()],
        "seed_provenance": meta or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        f.write(b"\n")
        for _, t in params.items():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"malformed checkpoint header in {path}: {e}") from e
        if header.get("format_version") != CKPT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header.get('format_version')} in {path}"
            )
        params = ParamSet()
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"truncated checkpoint blob in {path} at {entry['path']!r}")
            params[entry["path"]] = Tensor(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    return params, header["seed_provenance"]
