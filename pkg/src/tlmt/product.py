"""Product MDP runtime: an environment, a compiled task automaton, binary reward.

The label of every visited state (the reset state included) is consumed by
the automaton.  A transition pays reward 1 exactly when it enters an
accepting state from a non-accepting one, and an episode ends at the first
acceptance, on entering a dead state (optional), or when the step budget
runs out.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .abstraction import LetterTable, abstract_formula
from .automaton import DEFAULT_STATE_CAP, Dfa, compile_dfa, minimize
from .syntax import Signature, parse_formula, print_formula, resolve

__all__ = [
    "CompiledTask", "ProductState", "ProductTransition", "Trajectory",
    "ProductMDP", "EpisodeOver", "compile_task", "dead_states", "accepting_predecessors", "rollout",
    "ACCEPTED", "DEAD", "TIMEOUT", "NONE",
]

ACCEPTED, DEAD, TIMEOUT, NONE = "accepted", "dead", "timeout", "none"


def dead_states(d: Dfa) -> frozenset:
    """States from which no accepting state is reachable."""
    preds: dict[int, set[int]] = {q: set() for q in d.states}
    for q in d.states:
        for t in d.delta[q]:
            preds[int(t)].add(q)
    alive = set(d.accepting)
    queue = deque(alive)
    while queue:
        q = queue.popleft()
        for p in preds[q]:
            if p not in alive:
                alive.add(p)
                queue.append(p)
    return frozenset(q for q in d.states if q not in alive)


def accepting_predecessors(d: Dfa) -> list[tuple[int, int]]:
    """Every ``(q, letter)`` whose step leaves a non-accepting ``q`` for an accepting state.

    The letters on these edges are the candidate "true goals" of a task;
    when several exist none is privileged.
    """
    return [(q, nu) for q in d.states if q not in d.accepting
            for nu in range(d.alphabet_size) if int(d.delta[q, nu]) in d.accepting]


@dataclass
class CompiledTask:
    text: str
    formula: object
    prop: object
    table: LetterTable
    dfa: Dfa
    constants: dict
    signature: Signature
    dead: frozenset
    dead_state_termination: bool = True

    def __post_init__(self):
        assert not (self.dead & self.dfa.accepting)
        self._acc = np.zeros(self.dfa.num_states, dtype=bool)
        self._acc[list(self.dfa.accepting)] = True
        self._dead = np.zeros(self.dfa.num_states, dtype=bool)
        self._dead[list(self.dead)] = True

    @property
    def num_states(self) -> int:
        return self.dfa.num_states

    @property
    def variables(self) -> tuple:
        return self.signature.variables

    def label(self, mu, kappa: Mapping[str, float] | None = None) -> int:
        return self.table.label(mu, self.constants if kappa is None else kappa)

    def delta(self, q: int, nu: int) -> int:
        return int(self.dfa.delta[q, nu])

    def first_state(self, label: int) -> int:
        return int(self.dfa.delta[self.dfa.initial, label])

    def outcome(self, q: int, q_next: int, time_limit: bool = False) -> tuple[float, bool, str]:
        """``(reward, done, done_reason)`` of a transition ``q -> q_next``."""
        if self._acc[q_next]:
            return (0.0 if self._acc[q] else 1.0), True, ACCEPTED
        if self.dead_state_termination and self._dead[q_next]:
            return 0.0, True, DEAD
        if time_limit:
            return 0.0, True, TIMEOUT
        return 0.0, False, NONE

    def is_terminal_state(self, q: int) -> bool:
        return bool(self._acc[q] or (self.dead_state_termination and self._dead[q]))


def compile_task(text: str, constants: Mapping[str, float], variables: Sequence[str], *,
                 minimized: bool = True, state_cap: int = DEFAULT_STATE_CAP,
                 dead_state_termination: bool = True) -> CompiledTask:
    """Parse, resolve, abstract and compile a task formula."""
    phi = parse_formula(text)
    resolved, sig = resolve(phi, constants.keys(), variables)
    prop, table = abstract_formula(resolved)
    dfa = compile_dfa(prop, table, state_cap=state_cap)
    if minimized:
        dfa = minimize(dfa)
    return CompiledTask(text, resolved, prop, table, dfa,
                        {k: float(v) for k, v in constants.items()}, sig,
                        dead_states(dfa), dead_state_termination)


@dataclass(frozen=True)
class ProductState:
    env_state: np.ndarray
    q: int


@dataclass
class ProductTransition:
    state: np.ndarray
    q: int
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    next_q: int
    done: bool
    done_reason: str
    action_index: int = -1
    time_limit: bool = False

    def __post_init__(self):
        if self.done and self.done_reason == NONE:
            raise ValueError("done transition without a reason")

    @property
    def source(self) -> ProductState:
        return ProductState(self.state, self.q)

    @property
    def target(self) -> ProductState:
        return ProductState(self.next_state, self.next_q)

    def same_as(self, other: "ProductTransition") -> bool:
        return (np.array_equal(self.state, other.state) and self.q == other.q
                and np.array_equal(self.action, other.action) and self.reward == other.reward
                and np.array_equal(self.next_state, other.next_state)
                and self.next_q == other.next_q and self.done == other.done
                and self.done_reason == other.done_reason
                and self.action_index == other.action_index
                and self.time_limit == other.time_limit)


class EpisodeOver(RuntimeError):
    pass


class ProductMDP:
    """Runs one environment instance in lockstep with the task automaton."""

    def __init__(self, task: CompiledTask, env, max_steps: int = 200):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.task = task
        self.env = env
        self.max_steps = max_steps
        self.state: ProductState | None = None
        self.t = 0
        self.done = True

    def reset(self) -> ProductState:
        s = self.env.reset()
        q = self.task.first_state(self.task.label(s))
        self.state = ProductState(s, q)
        self.t = 0
        self.done = self.task.is_terminal_state(q)
        return self.state

    def step(self, action) -> ProductTransition:
        if self.done or self.state is None:
            raise EpisodeOver("episode is over; call reset()")
        index = -1
        if np.ndim(action) == 0:
            index = int(action)
            action = self.env.action_grid[index]
        action = np.asarray(action, dtype=float)
        s2 = self.env.step(action)
        q = self.state.q
        q2 = self.task.delta(q, self.task.label(s2))
        self.t += 1
        time_limit = self.t >= self.max_steps
        reward, done, reason = self.task.outcome(q, q2, time_limit)
        tr = ProductTransition(self.state.env_state, q, action, reward, s2, q2, done, reason,
                               index, time_limit)
        self.state = ProductState(s2, q2)
        self.done = done
        return tr


@dataclass
class Trajectory:
    """Raw states ``s_0..s_T`` with automaton states ``q_0..q_T`` and step data.

    ``start_q`` is set for counterfactual copies whose first automaton state
    is imposed rather than derived from the reset label.
    """
    states: np.ndarray
    qs: np.ndarray
    actions: np.ndarray
    action_indices: np.ndarray
    rewards: np.ndarray
    done_reasons: list
    time_limits: np.ndarray
    constants: dict
    start_q: int | None = None
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def success(self) -> bool:
        return bool(len(self.done_reasons)) and self.done_reasons[-1] == ACCEPTED

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def transitions(self) -> list[ProductTransition]:
        out = []
        for t in range(len(self)):
            reason = self.done_reasons[t]
            out.append(ProductTransition(
                self.states[t], int(self.qs[t]), self.actions[t], float(self.rewards[t]),
                self.states[t + 1], int(self.qs[t + 1]), reason != NONE, reason,
                int(self.action_indices[t]), bool(self.time_limits[t])))
        return out

    def to_csv(self, variables: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        adim = self.actions.shape[1] if self.actions.ndim == 2 else 0
        w.writerow(["step", *variables, *[f"a{i}" for i in range(adim)], "q", "reward", "done_reason"])
        for t in range(len(self.states)):
            act = [repr(float(v)) for v in self.actions[t]] if t < len(self) else [""] * adim
            reward = repr(float(self.rewards[t - 1])) if t else "0.0"
            reason = self.done_reasons[t - 1] if t else NONE
            w.writerow([t, *[repr(float(v)) for v in self.states[t]], *act, int(self.qs[t]),
                        reward, reason])
        return buf.getvalue()


def rerun(task: CompiledTask, states: np.ndarray, labels: np.ndarray, q0: int,
          time_limit_last: bool):
    """Automaton states, rewards and reasons along a raw trajectory from ``q0``.

    Stops at the first terminating transition.  Returns ``(qs, rewards,
    reasons, time_limits)`` with ``len(qs) == len(rewards) + 1``.
    """
    qs = [q0]
    rewards, reasons, limits = [], [], []
    if task.is_terminal_state(q0):
        return np.array(qs), np.zeros(0), [], np.zeros(0, dtype=bool)
    delta = task.dfa.delta
    T = len(states) - 1
    q = q0
    for t in range(1, T + 1):
        q2 = int(delta[q, labels[t]])
        limit = time_limit_last and t == T
        r, done, reason = task.outcome(q, q2, limit)
        qs.append(q2)
        rewards.append(r)
        reasons.append(reason)
        limits.append(limit)
        q = q2
        if done:
            break
    return np.array(qs), np.array(rewards, dtype=float), reasons, np.array(limits, dtype=bool)


def rollout(task: CompiledTask, env, policy: Callable, max_steps: int = 200) -> Trajectory:
    """Run one episode; ``policy(ProductState)`` returns an action vector or a grid index."""
    mdp = ProductMDP(task, env, max_steps)
    ps = mdp.reset()
    states, qs = [ps.env_state], [ps.q]
    actions, indices, rewards, reasons, limits = [], [], [], [], []
    while not mdp.done:
        tr = mdp.step(policy(ps))
        ps = tr.target
        states.append(tr.next_state)
        qs.append(tr.next_q)
        actions.append(tr.action)
        indices.append(tr.action_index)
        rewards.append(tr.reward)
        reasons.append(tr.done_reason)
        limits.append(tr.time_limit)
    adim = getattr(env, "action_dim", 2)
    return Trajectory(
        states=np.array(states), qs=np.array(qs, dtype=np.int64),
        actions=np.array(actions, dtype=float).reshape(len(actions), adim),
        action_indices=np.array(indices, dtype=np.int64), rewards=np.array(rewards, dtype=float),
        done_reasons=reasons, time_limits=np.array(limits, dtype=bool),
        constants=dict(task.constants))
