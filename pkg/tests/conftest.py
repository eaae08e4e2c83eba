"""Shared expensive fixtures: trained models for the end-to-end suite."""

import time

import pytest

from teleassist import worldsim
from teleassist.assist_gate import GateConfig, calibrate
from teleassist.demo_corpus import generate_branch_corpus, scripted_demo
from teleassist.fleet_service import ModelBundle
from teleassist.reach_ensemble import ReachConfig, train_ensemble
from teleassist.subgoal_cvae import CvaeConfig, train_cvae


def holdout_demos(world, seed_base, n=8, noise=0.002):
    """Fresh scripted demos (disjoint seeds) for threshold calibration."""
    demos = []
    for i in range(n):
        pad = worldsim.LEFT_PAD if i % 2 == 0 else worldsim.RIGHT_PAD
        task = worldsim.TaskSpec(((0, pad),))
        demos.append(scripted_demo(world, task, seed_base + i, noise,
                                   traj_id=f"holdout-{i}"))
    return demos


@pytest.fixture(scope="session")
def session_world():
    return worldsim.default_world()


@pytest.fixture(scope="session")
def branch_corpus(session_world):
    return generate_branch_corpus(session_world, 200, seed=7)


@pytest.fixture(scope="session")
def trained(session_world, branch_corpus):
    """Subgoal predictor + reaching ensemble + calibrated thresholds.

    Trained once per pytest session at the full desk configuration; wall
    times are recorded so budgeted tests can check them.
    """
    world = session_world
    t0 = time.time()
    cvae_config = CvaeConfig(state_dim=world.state_dim)
    cvae_params, cvae_log = train_cvae(branch_corpus, cvae_config, seed=0)
    cvae_seconds = time.time() - t0

    reach_config = ReachConfig(state_dim=world.state_dim)
    ensemble = train_ensemble(
        branch_corpus, reach_config,
        [100 + k for k in range(reach_config.ensemble_size)])

    report = calibrate(holdout_demos(world, 500), cvae_params, cvae_config,
                       ensemble, reach_config, world, seed=0)
    gate = GateConfig(gamma=report.gamma, omega=report.omega)
    models = ModelBundle(cvae_params=cvae_params, cvae_config=cvae_config,
                         ensemble=ensemble, reach_config=reach_config,
                         gate=gate)
    return {
        "world": world,
        "corpus": branch_corpus,
        "cvae_params": cvae_params,
        "cvae_config": cvae_config,
        "cvae_log": cvae_log,
        "cvae_seconds": cvae_seconds,
        "reach_config": reach_config,
        "ensemble": ensemble,
        "gate": gate,
        "calibration": report,
        "models": models,
        "total_seconds": time.time() - t0,
    }
