"""One scripted parking episode, then its counterfactual and hindsight copies.

The car visits checkpoint A and ends short of the goal, so the real
episode earns nothing.  The CRM copy that starts in the automaton's
"after A" state, and every hindsight relabeling that keeps A, do earn
the reward.

    python3 demos/relabel_walkthrough.py
"""
import math

import numpy as np

from tlmt.augment import GoalSpec, crm_her_expand
from tlmt.product import rollout
from tlmt.tasks import corpus_config


def steer_to(points, tol=0.03):
    i = [0]

    def policy(ps):
        s = ps.env_state
        if math.hypot(points[i[0]][0] - s[0], points[i[0]][1] - s[1]) < tol and i[0] < len(points) - 1:
            i[0] += 1
        tx, ty = points[i[0]]
        err = math.atan2(ty - s[1], tx - s[0]) - math.atan2(s[4], s[5])
        err = (err + math.pi) % (2 * math.pi) - math.pi
        return np.array([1.0, float(np.clip(3 * err, -1, 1))])
    return policy


def describe(tag, traj):
    end = traj.states[-1]
    print(f"{tag:22s} start_q={traj.qs[0]} steps={len(traj):3d} return={traj.total_reward:.0f} "
          f"end=({end[0]:+.3f},{end[1]:+.3f}) goal=({traj.constants['a']:+.3f},{traj.constants['b']:+.3f})")


def main():
    cfg = corpus_config("parking_1")
    task = cfg.compile()
    env = cfg.make_env(seed=0)
    traj = rollout(task, env, steer_to([(-0.2, -0.08), (0.05, 0.11)]), 25)
    print(f"automaton: {task.num_states} states, accepting {sorted(task.dfa.accepting)}")
    describe("real", traj)
    out = crm_her_expand(task, traj, GoalSpec(cfg.goal_map))
    k = task.num_states
    for q, copy in enumerate(out[:k]):
        describe(f"crm from q={q}", copy)
    for q, relabeled in enumerate(out[k:]):
        describe(f"crm+her from q={q}", relabeled)


if __name__ == "__main__":
    main()
