"""Assisted teleoperation for scalable multi-robot demonstration collection.

Library layout:

- `tensor`, `nn`: dense f64 tensors with reverse-mode autodiff, MLP/LSTM
  layers, Adam.
- `worldsim`: deterministic 2-D branching pick-and-place environment.
- `demo_corpus`: scripted demonstrators, trajectory storage, window sampling.
- `subgoal_cvae`: conditional VAE over future states (the task-uncertainty
  signal and subgoal source).
- `reach_ensemble`: recurrent goal-reaching policy ensemble (the
  policy-uncertainty signal and action source).
- `assist_gate`: uncertainty estimators, threshold calibration, and the
  assist predicate.
- `fleet_service`: multi-robot collection sessions with scripted or live
  operators, event-sourced logs.
- `downstream_eval`: behavioral-cloning probe for corpus quality.
- `profiles`: named hyperparameter bundles.
- `cli`: end-to-end pipeline entry point.
"""

__version__ = "0.1.0"
