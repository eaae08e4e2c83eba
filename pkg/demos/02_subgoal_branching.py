"""Subgoal predictor on a branching corpus, at a reduced budget.

Trains a small conditional VAE on 40 two-pad demos (about a minute),
then samples subgoals at a just-grasped state: both placement modes
should appear among the prior samples.

    python3 demos/02_subgoal_branching.py
"""

import dataclasses

import numpy as np

from teleassist import worldsim
from teleassist.demo_corpus import generate_branch_corpus
from teleassist.subgoal_cvae import CvaeConfig, sample_subgoals, train_cvae


def main():
    world = worldsim.default_world()
    corpus = generate_branch_corpus(world, 40, seed=11)
    config = dataclasses.replace(CvaeConfig(state_dim=world.state_dim),
                                 train_iters=1500)
    params, log = train_cvae(corpus, config, seed=0)
    print(f"trained {config.train_iters} iters, "
          f"final loss {log[-1]['total']:.4f}")

    # a state right after the grasp: the placement pad is still undecided
    grasped = next(
        s for t in corpus.trajectories for s in t.states
        if worldsim.object_attached(s, 0))
    samples = sample_subgoals(params, config, grasped, 512, seed=0)
    pads = np.array(world.pad_positions)
    nearest = np.argmin(
        np.linalg.norm(samples[:, None, 0:2] - pads[None, :, :], axis=2), axis=1)
    for pad in range(len(pads)):
        frac = float(np.mean(nearest == pad))
        print(f"pad {pad}: {frac:.0%} of sampled subgoals")


if __name__ == "__main__":
    main()
