"""Regenerates the console test fixtures.

Runs small fleet sessions with untrained models and a scripted operator,
recording both the stored fleet log and the exact message stream the
operator received.  The replay test asserts the log converts back into
that identical stream.

Run from the repository root:

    python3 frontend/scripts/make_fixtures.py
"""

import json
import os

from teleassist import worldsim
from teleassist.assist_gate import GateConfig
from teleassist.fleet_service import (
    ModelBundle, ScriptedOperator, Session, SessionConfig,
)
from teleassist.reach_ensemble import FlatConfig, ReachConfig, init_flat_member, init_member
from teleassist.subgoal_cvae import CvaeConfig, init_cvae

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")


class RecordingOperator(ScriptedOperator):
    """Scripted operator that also keeps the raw message stream."""

    def __init__(self, world_config):
        super().__init__(world_config)
        self.stream = []

    def handle(self, msg):
        self.stream.append(json.loads(json.dumps(msg)))
        super().handle(msg)


def tiny_models(world):
    cvae_cfg = CvaeConfig(state_dim=world.state_dim, latent_dim=4,
                          hidden_width=8, hidden_depth=1, train_iters=1)
    reach_cfg = ReachConfig(state_dim=world.state_dim, ensemble_size=2,
                            skill_horizon=3, goal_horizon=6, lstm_hidden=8,
                            embed_width=8, embed_depth=1, out_width=8,
                            out_depth=1, train_iters=1)
    return ModelBundle(
        cvae_params=init_cvae(cvae_cfg, 0), cvae_config=cvae_cfg,
        ensemble=[init_member(reach_cfg, s) for s in (0, 1)],
        reach_config=reach_cfg,
        # tight thresholds: every monitored tick requests help, so the
        # stream exercises requests, grants, human driving, and releases
        gate=GateConfig(gamma=1e-9, omega=1e-9, n_subgoal_samples=8))


def record(name, mode, robots, budget, seed):
    world = worldsim.default_world()
    operator = RecordingOperator(world)
    config = SessionConfig(robots=robots, budget_ticks=budget, mode=mode,
                           seed=seed, episode_horizon=60, n_subgoal_samples=8)
    session = Session(tiny_models(world), world, config, operator)
    log, _ = session.run()
    log.to_ndjson(os.path.join(OUT_DIR, f"{name}.log.ndjson"))
    with open(os.path.join(OUT_DIR, f"{name}.stream.ndjson"), "w") as f:
        for msg in operator.stream:
            f.write(json.dumps(msg, sort_keys=True) + "\n")
    print(f"{name}: {len(log.events)} events, {len(operator.stream)} messages")


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    record("full_r2", mode="full", robots=2, budget=80, seed=5)
    record("unassisted_r3", mode="unassisted", robots=3, budget=80, seed=9)


if __name__ == "__main__":
    main()
