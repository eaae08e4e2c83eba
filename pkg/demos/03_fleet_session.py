"""A multi-robot collection session with the scripted operator.

Uses untrained models behind a zero threshold so every monitored tick
asks for help: the scripted operator then hand-drives each robot, which
shows the request / grant / release cycle and the audited event log
without any training time.

    python3 demos/03_fleet_session.py
"""

from teleassist import worldsim
from teleassist.assist_gate import GateConfig
from teleassist.fleet_service import (
    ModelBundle, ScriptedOperator, SessionConfig, run_session,
)
from teleassist.reach_ensemble import ReachConfig, init_member
from teleassist.subgoal_cvae import CvaeConfig, init_cvae


def main():
    world = worldsim.default_world()
    cvae_config = CvaeConfig(state_dim=world.state_dim, latent_dim=4,
                             hidden_width=8, hidden_depth=1)
    reach_config = ReachConfig(state_dim=world.state_dim, ensemble_size=2,
                               skill_horizon=3, goal_horizon=6, lstm_hidden=8,
                               embed_width=8, embed_depth=1, out_width=8,
                               out_depth=1)
    models = ModelBundle(
        cvae_params=init_cvae(cvae_config, 0), cvae_config=cvae_config,
        ensemble=[init_member(reach_config, s) for s in (0, 1)],
        reach_config=reach_config,
        gate=GateConfig(gamma=1e-9, omega=1e-9, n_subgoal_samples=8))

    config = SessionConfig(robots=3, budget_ticks=600, mode="full", seed=4,
                           n_subgoal_samples=8)
    log, corpus = run_session(models, world, config, ScriptedOperator(world))

    print("counters:")
    for key, value in log.counters.items():
        print(f"  {key}: {value}")
    print(f"log audit consistent: {log.audit()}")
    print(f"collected {len(corpus)} demos; per-step annotations of the "
          f"first: {set(corpus.trajectories[0].annotations)}"
          if len(corpus) else "no demos inside this budget")


if __name__ == "__main__":
    main()
