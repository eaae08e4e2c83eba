"""Tour of the simulated workspace and the scripted demonstrator.

Rolls one scripted pick-and-place per pad, prints the trajectory shape,
and shows the corpus round-trip through NDJSON.

    python3 demos/01_world_and_demos.py
"""

import tempfile

from teleassist import worldsim
from teleassist.demo_corpus import (
    generate_branch_corpus, load_corpus, save_corpus, scripted_demo,
)


def main():
    world = worldsim.default_world()
    print(f"workspace: {world.num_objects} object(s), "
          f"{len(world.pad_positions)} pads, state_dim {world.state_dim}")

    for pad in (worldsim.LEFT_PAD, worldsim.RIGHT_PAD):
        task = worldsim.TaskSpec(((0, pad),))
        traj = scripted_demo(world, task, seed=1, noise_scale=0.002)
        final = traj.states[-1]
        print(f"pad {pad}: {len(traj.actions)} steps, success={traj.success}, "
              f"object ends at ({final[3]:.2f}, {final[4]:.2f})")

    corpus = generate_branch_corpus(world, 10, seed=3)
    with tempfile.NamedTemporaryFile(suffix=".ndjson") as f:
        save_corpus(corpus, f.name)
        back = load_corpus(f.name)
    print(f"corpus round-trip: {len(back)} demos, "
          f"world hash {back.world_config.hash()[:12]}")


if __name__ == "__main__":
    main()
