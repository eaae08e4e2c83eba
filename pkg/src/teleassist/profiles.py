"""Named hyperparameter profiles.

`desk` is the tuned configuration for the bundled 2-D world; the two
`paper-*` profiles freeze the published full-scale hyperparameter sets
verbatim so fidelity runs and desk runs never mix values silently.
"""

from __future__ import annotations

from dataclasses import dataclass

from .reach_ensemble import ReachConfig
from .subgoal_cvae import CvaeConfig


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    name: str
    cvae: CvaeConfig
    reach: ReachConfig

    def __post_init__(self):
        if self.cvae.state_dim != self.reach.state_dim:
            raise ProfileError("cvae/reach state dims disagree")
        if self.cvae.goal_horizon != self.reach.goal_horizon:
            raise ProfileError("cvae/reach goal horizons disagree")
        if self.cvae.skill_horizon != self.reach.skill_horizon:
            raise ProfileError("cvae/reach skill horizons disagree")


def desk_profile(state_dim: int) -> Profile:
    return Profile(
        name="desk",
        cvae=CvaeConfig(state_dim=state_dim),
        reach=ReachConfig(state_dim=state_dim),
    )


def _paper_profile(name: str, state_dim: int, goal_horizon: int,
                   skill_horizon: int, cvae_iters: int, reach_iters: int,
                   ) -> Profile:
    return Profile(
        name=name,
        cvae=CvaeConfig(
            state_dim=state_dim,
            latent_dim=128,
            hidden_width=128,
            hidden_depth=5,
            goal_horizon=goal_horizon,
            skill_horizon=skill_horizon,
            beta=0.02,
            batch_size=16,
            train_iters=cvae_iters,
            lr=1e-3,
        ),
        reach=ReachConfig(
            state_dim=state_dim,
            ensemble_size=5,
            skill_horizon=skill_horizon,
            goal_horizon=goal_horizon,
            lstm_hidden=256,
            embed_width=256,
            embed_depth=3,
            out_width=256,
            out_depth=3,
            batch_size=16,
            train_iters=reach_iters,
            lr=1e-3,
        ),
    )


def paper_kitchen_profile(state_dim: int) -> Profile:
    return _paper_profile("paper-kitchen", state_dim, goal_horizon=35,
                          skill_horizon=15, cvae_iters=200, reach_iters=300)


def paper_ikea_profile(state_dim: int) -> Profile:
    return _paper_profile("paper-ikea", state_dim, goal_horizon=7,
                          skill_horizon=7, cvae_iters=500, reach_iters=4000)


PROFILES = {
    "desk": desk_profile,
    "paper-kitchen": paper_kitchen_profile,
    "paper-ikea": paper_ikea_profile,
}


def get_profile(name: str, state_dim: int) -> Profile:
    try:
        factory = PROFILES[name]
    except KeyError:
        raise ProfileError(
            f"unknown profile {name!r}; expected one of {sorted(PROFILES)}"
        ) from None
    return factory(state_dim)
