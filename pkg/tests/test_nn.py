"""Layers, optimizer, and checkpoint format."""

import numpy as np
import pytest

from teleassist.nn import (
    AdamState, ContractError, MlpSpec, ParamSet, adam_step, forward_lstm_step,
    forward_mlp, gradients_of, init_lstm, init_mlp, load_checkpoint,
    save_checkpoint,
)
from teleassist.tensor import NumericError, Tensor, TensorError


def zero_params(params: ParamSet) -> ParamSet:
    for _, t in params.items():
        t.data[...] = 0.0
    return params


# ----- MLP -----


def test_mlp_zero_weights_gives_zero_output():
    spec = MlpSpec(sizes=(3, 4, 2))
    params = zero_params(init_mlp(spec, np.random.default_rng(0)))
    out = forward_mlp(params, spec, Tensor(np.ones((5, 3))))
    np.testing.assert_array_equal(out.data, 0.0)


def test_mlp_identity_layer_passes_input_through():
    spec = MlpSpec(sizes=(2, 2), activation="identity")
    params = ParamSet({"layer0.w": Tensor(np.eye(2)),
                       "layer0.b": Tensor(np.zeros(2))})
    x = np.array([[0.3, -0.7]])
    out = forward_mlp(params, spec, Tensor(x))
    np.testing.assert_array_equal(out.data, x)


def test_mlp_leaky_relu_negative_slope():
    # w=2, b=1, input -1: pre-activation -1, leaky_relu(0.2) -> -0.2
    spec = MlpSpec(sizes=(1, 1), activation="leaky_relu",
                   output_activation="leaky_relu")
    params = ParamSet({"layer0.w": Tensor([[2.0]]),
                       "layer0.b": Tensor([1.0])})
    out = forward_mlp(params, spec, Tensor([[-1.0]]))
    assert out.data[0, 0] == pytest.approx(-0.2)


def test_mlp_rejects_wrong_input_width():
    spec = MlpSpec(sizes=(3, 2))
    params = init_mlp(spec, np.random.default_rng(0))
    with pytest.raises(TensorError, match="layer0"):
        forward_mlp(params, spec, Tensor(np.ones((1, 4))))


def test_mlp_rejects_bad_activation():
    with pytest.raises(ContractError):
        MlpSpec(sizes=(2, 2), activation="relu6")


def test_mlp_deterministic():
    spec = MlpSpec(sizes=(4, 8, 3), layer_norm=True)
    params = init_mlp(spec, np.random.default_rng(5))
    x = Tensor(np.random.default_rng(1).standard_normal((2, 4)))
    a = forward_mlp(params, spec, x).data
    b = forward_mlp(params, spec, x).data
    np.testing.assert_array_equal(a, b)


def test_mlp_init_reproducible_and_bounded():
    spec = MlpSpec(sizes=(9, 4))
    p1 = init_mlp(spec, np.random.default_rng(3))
    p2 = init_mlp(spec, np.random.default_rng(3))
    assert p1.l2_distance(p2) == 0.0
    assert np.max(np.abs(p1["layer0.w"].data)) <= 1.0 / 3.0
    np.testing.assert_array_equal(p1["layer0.b"].data, 0.0)


def test_mlp_gradients_flow_through_layer_norm():
    spec = MlpSpec(sizes=(3, 4, 1), layer_norm=True)
    params = init_mlp(spec, np.random.default_rng(2)).require_grad()
    x = Tensor(np.random.default_rng(0).standard_normal((3, 3)))
    forward_mlp(params, spec, x).sum().backward()
    grads = gradients_of(params)
    assert any(np.any(grads[p].data != 0) for p in params.paths())
    assert np.any(grads["layer0.ln_g"].data != 0)


# ----- LSTM -----


def test_lstm_zero_everything_is_zero():
    params = zero_params(init_lstm(3, 4, np.random.default_rng(0)))
    h, c = forward_lstm_step(params, Tensor(np.zeros((1, 3))),
                             Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4))))
    np.testing.assert_array_equal(h.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)


def test_lstm_zero_params_halve_the_cell():
    # all gates sigmoid(0) = 0.5, candidate tanh(0) = 0:
    # cell' = 0.5 c, hidden' = 0.5 tanh(0.5 c)
    params = zero_params(init_lstm(2, 3, np.random.default_rng(0)))
    c0 = np.array([[0.4, -1.0, 2.0]])
    h, c = forward_lstm_step(params, Tensor(np.zeros((1, 2))),
                             Tensor(np.zeros((1, 3))), Tensor(c0))
    np.testing.assert_allclose(c.data, 0.5 * c0)
    np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * c0))


def test_lstm_deterministic():
    params = init_lstm(3, 5, np.random.default_rng(1))
    x = Tensor(np.random.default_rng(2).standard_normal((2, 3)))
    h0 = Tensor(np.random.default_rng(3).standard_normal((2, 5)))
    c0 = Tensor(np.random.default_rng(4).standard_normal((2, 5)))
    h1, c1 = forward_lstm_step(params, x, h0, c0)
    h2, c2 = forward_lstm_step(params, x, h0, c0)
    np.testing.assert_array_equal(h1.data, h2.data)
    np.testing.assert_array_equal(c1.data, c2.data)


def test_lstm_rejects_nonfinite_input():
    params = init_lstm(2, 3, np.random.default_rng(0))
    with pytest.raises(NumericError):
        forward_lstm_step(params, Tensor([[np.nan, 0.0]]),
                          Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 3))))


def test_lstm_rejects_wrong_hidden_width():
    params = init_lstm(2, 3, np.random.default_rng(0))
    with pytest.raises(TensorError):
        forward_lstm_step(params, Tensor(np.zeros((1, 2))),
                          Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4))))


# ----- Adam -----


def test_adam_first_step_is_minus_lr():
    params = ParamSet({"w": Tensor(np.zeros(1))}).require_grad()
    grads = ParamSet({"w": Tensor(np.ones(1))})
    adam_step(AdamState(lr=0.001), params, grads)
    assert abs(params["w"].data[0] + 0.001) < 1e-9


def test_adam_zero_gradient_leaves_params_unchanged():
    state = AdamState(lr=0.1)
    params = ParamSet({"w": Tensor(np.array([1.0, -2.0]))})
    before = params["w"].data.copy()
    adam_step(state, params, ParamSet({"w": Tensor(np.zeros(2))}))
    np.testing.assert_array_equal(params["w"].data, before)
    assert state.step == 1


def test_adam_rejects_mismatched_keys_and_shapes():
    params = ParamSet({"w": Tensor(np.zeros(2))})
    with pytest.raises(ContractError):
        adam_step(AdamState(), params, ParamSet({"v": Tensor(np.zeros(2))}))
    with pytest.raises(ContractError):
        adam_step(AdamState(), params, ParamSet({"w": Tensor(np.zeros(3))}))


def test_adam_trajectories_bitwise_reproducible():
    def run():
        rng = np.random.default_rng(7)
        params = ParamSet({"w": Tensor(rng.standard_normal((3, 3)))})
        state = AdamState(lr=0.01)
        for _ in range(20):
            adam_step(state, params,
                      ParamSet({"w": Tensor(rng.standard_normal((3, 3)))}))
        return params["w"].data.copy()

    np.testing.assert_array_equal(run(), run())


def test_adam_descends_on_quadratic():
    params = ParamSet({"w": Tensor(np.array([5.0]))}).require_grad()
    state = AdamState(lr=0.05)
    for _ in range(500):
        params.zero_grad()
        loss = (params["w"] * params["w"]).sum()
        loss.backward()
        adam_step(state, params, gradients_of(params))
    assert abs(params["w"].data[0]) < 0.05


# ----- ParamSet / checkpoints -----


def test_paramset_iteration_is_lexicographic():
    params = ParamSet()
    params["b.w"] = Tensor(np.zeros(1))
    params["a.w"] = Tensor(np.zeros(1))
    params["a.b"] = Tensor(np.zeros(1))
    assert [p for p, _ in params.items()] == ["a.b", "a.w", "b.w"]


def test_paramset_missing_path_names_the_path():
    with pytest.raises(KeyError, match="nope"):
        ParamSet()["nope"]


def test_checkpoint_roundtrip_bitwise(tmp_path):
    spec = MlpSpec(sizes=(3, 4, 2), layer_norm=True)
    params = init_mlp(spec, np.random.default_rng(11))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, meta={"seed": 11})
    loaded, meta = load_checkpoint(path)
    assert meta == {"seed": 11}
    assert loaded.paths() == params.paths()
    for p, t in params.items():
        np.testing.assert_array_equal(loaded[p].data, t.data)


def test_checkpoint_truncation_detected(tmp_path):
    params = init_mlp(MlpSpec(sizes=(4, 4)), np.random.default_rng(0))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_bytes_reproducible(tmp_path):
    params = init_mlp(MlpSpec(sizes=(3, 3)), np.random.default_rng(5))
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, params)
    save_checkpoint(b, params)
    assert a.read_bytes() == b.read_bytes()
