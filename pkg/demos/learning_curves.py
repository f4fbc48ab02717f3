"""Train baseline and crm_her on the lite parking task and print eval curves.

    python3 demos/learning_curves.py [SEED] [EPISODES]

One run of each mode takes under a minute on one core at 2000 episodes.
"""
import sys

from tlmt.agent import final_success, train
from tlmt.tasks import corpus_config


def main(seed=0, episodes=None):
    cfg = corpus_config("parking_1_lite")
    task, goal = cfg.compile(), cfg.goal_spec()
    for mode in ("baseline", "crm_her"):
        spec = cfg.train_spec(mode=mode, seed=seed, episodes=episodes)
        rows, _, buf = train(task, cfg.make_env(), spec, goal, eval_env=cfg.make_env())
        curve = [(r["episode"] + 1, r["eval_success"]) for r in rows if r["eval_success"] != ""]
        print(f"{mode}: final {final_success(rows, 50, spec.eval_episodes):.2f}, "
              f"buffer census {buf.census()}")
        print("  " + "  ".join(f"{ep}:{v:.2f}" for ep, v in curve))


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]]
    main(*args)
