"""Subgoal predictor: encoder/decoder contracts, loss arithmetic, sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teleassist import worldsim
from teleassist.demo_corpus import TrainingWindow, generate_branch_corpus
from teleassist.nn import ParamSet
from teleassist.subgoal_cvae import (
    CvaeConfig, committed_subgoal, cvae_loss, decode, encode, init_cvae,
    kl_to_unit_gaussian, loss_log_csv, sample_subgoals, train_cvae,
)
from teleassist.tensor import Tensor, TensorError


@pytest.fixture
def config():
    return CvaeConfig(state_dim=6, latent_dim=4, hidden_width=8,
                      hidden_depth=2, train_iters=10)


def zeroed(params: ParamSet) -> ParamSet:
    for _, t in params.items():
        t.data[...] = 0.0
    return params


def test_config_validation():
    with pytest.raises(ValueError):
        CvaeConfig(state_dim=6, latent_dim=0)
    with pytest.raises(ValueError):
        CvaeConfig(state_dim=6, beta=-0.1)
    with pytest.raises(ValueError):
        CvaeConfig(state_dim=6, goal_horizon=0)


def test_encode_zero_weights_is_unit_gaussian(config):
    params = zeroed(init_cvae(config, 0))
    q = encode(params, config, np.ones(6), np.ones(6))
    np.testing.assert_array_equal(q.mean, 0.0)
    np.testing.assert_array_equal(q.log_std, 0.0)


def test_decode_zero_weights_is_zero(config):
    params = zeroed(init_cvae(config, 0))
    out = decode(params, config, np.ones(6), np.zeros(4))
    np.testing.assert_array_equal(out, 0.0)


def test_encode_decode_deterministic(config):
    params = init_cvae(config, 1)
    s, g = np.full(6, 0.3), np.full(6, 0.6)
    a, b = encode(params, config, s, g), encode(params, config, s, g)
    np.testing.assert_array_equal(a.mean, b.mean)
    z = np.random.default_rng(0).standard_normal(4)
    np.testing.assert_array_equal(decode(params, config, s, z),
                                  decode(params, config, s, z))


def test_shape_contracts(config):
    params = init_cvae(config, 0)
    with pytest.raises(TensorError, match="state"):
        encode(params, config, np.ones(5), np.ones(6))
    with pytest.raises(TensorError, match="subgoal"):
        encode(params, config, np.ones(6), np.ones(7))
    with pytest.raises(TensorError, match="latent"):
        decode(params, config, np.ones(6), np.ones(3))


def test_kl_of_unit_gaussian_is_zero():
    kl = kl_to_unit_gaussian(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4))))
    assert kl.data[0] == pytest.approx(0.0)


def test_kl_of_shifted_mean_is_half():
    mean = np.zeros((1, 4))
    mean[0, 0] = 1.0
    kl = kl_to_unit_gaussian(Tensor(mean), Tensor(np.zeros((1, 4))))
    assert kl.data[0] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6),
       st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=6))
def test_kl_nonnegative(mean, log_std):
    n = min(len(mean), len(log_std))
    kl = kl_to_unit_gaussian(Tensor(np.array([mean[:n]])),
                             Tensor(np.array([log_std[:n]])))
    assert kl.data[0] >= -1e-12


def test_perfect_reconstruction_leaves_only_kl(config):
    # zero weights decode to 0; windows with zero subgoal therefore have
    # zero reconstruction error and q = N(0, I) has zero KL
    params = zeroed(init_cvae(config, 0))
    windows = [TrainingWindow(state=np.ones(6), actions=np.zeros((1, 3)),
                              subgoal=np.zeros(6))]
    total, parts = cvae_loss(params, config, windows, np.random.default_rng(0))
    assert parts["recon"] == pytest.approx(0.0)
    assert parts["kl"] == pytest.approx(0.0)
    assert total.item() == pytest.approx(0.0)


def test_sample_subgoals_contract_and_determinism(config):
    params = init_cvae(config, 2)
    s = np.full(6, 0.4)
    assert sample_subgoals(params, config, s, 1, seed=0).shape == (1, 6)
    a = sample_subgoals(params, config, s, 16, seed=5)
    b = sample_subgoals(params, config, s, 16, seed=5)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        sample_subgoals(params, config, s, 0, seed=0)


def test_committed_subgoal_sticks_to_previous_mode():
    left = np.tile([0.2, 0.8, 0, 0, 0, 0], (10, 1))
    right = np.tile([0.8, 0.8, 0, 0, 0, 0], (10, 1))
    samples = np.vstack([left, right])
    prev = np.array([0.78, 0.81, 0, 0, 0, 0])
    out = committed_subgoal(samples, prev)
    np.testing.assert_allclose(out[0:2], [0.8, 0.8])
    # without history the first sample anchors
    np.testing.assert_allclose(committed_subgoal(samples, None)[0:2], [0.2, 0.8])


def test_training_is_deterministic_and_reduces_loss():
    world = worldsim.default_world()
    corpus = generate_branch_corpus(world, 6, seed=2)
    cfg = CvaeConfig(state_dim=world.state_dim, latent_dim=4, hidden_width=16,
                     hidden_depth=2, train_iters=150)
    p1, log1 = train_cvae(corpus, cfg, seed=3)
    p2, log2 = train_cvae(corpus, cfg, seed=3)
    assert p1.l2_distance(p2) == 0.0
    assert log1 == log2
    assert log1[-1]["total"] < log1[0]["total"]
    csv = loss_log_csv(log1)
    assert csv.splitlines()[0] == "iteration,recon,kl,total"
    assert len(csv.splitlines()) == len(log1) + 1
