"""Replay buffer and experience augmentation for product-MDP trajectories.

* CRM: every real transition is replayed from every automaton state.
* HER: goal constants are set to the values reached at the end of a
  trajectory, the letters are relabeled under the substituted formula and
  the automaton is re-run over the stored raw states.
* CRM-HER: one counterfactual copy of the whole trajectory per automaton
  state, plus the hindsight relabeling of each copy.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .product import (
    ACCEPTED, NONE, CompiledTask, ProductTransition, Trajectory, rerun,
)

__all__ = [
    "TAGS", "GoalSpec", "ReplayBuffer", "Batch",
    "crm_expand", "crm_trajectory", "her_relabel", "crm_her_expand", "trajectory_labels",
]

TAGS = ("real", "crm", "her", "crm_her")
_REASONS = ("none", "accepted", "dead", "timeout")


@dataclass(frozen=True)
class GoalSpec:
    """Goal constants and the state variable each one is relabeled from."""
    goal_map: Mapping[str, str]

    def __post_init__(self):
        targets = list(self.goal_map.values())
        if len(set(targets)) != len(targets):
            raise ValueError("goal constants must map to distinct variables")
        object.__setattr__(self, "goal_map", dict(self.goal_map))

    @property
    def constants(self) -> tuple:
        return tuple(self.goal_map)

    def validate(self, task: CompiledTask):
        for c, v in self.goal_map.items():
            if c not in task.signature.constants:
                raise ValueError(f"goal constant {c!r} is not a constant of the task")
            if v not in task.signature.variables:
                raise ValueError(f"goal constant {c!r} maps to unknown variable {v!r}")

    def achieved(self, task: CompiledTask, state) -> dict:
        return {c: float(state[task.signature.index(v)]) for c, v in self.goal_map.items()}

    def vector(self, constants: Mapping[str, float]) -> np.ndarray:
        return np.array([constants[c] for c in self.goal_map], dtype=float)


# --------------------------------------------------------------------------
# CRM

def crm_expand(task: CompiledTask, tr: ProductTransition) -> list[ProductTransition]:
    """One counterfactual transition per automaton state.

    The label of the reached state is computed once and shared by all
    copies; the copy from ``tr.q`` reproduces ``tr``.
    """
    label = task.label(tr.next_state)
    out = []
    for q in range(task.num_states):
        q2 = task.delta(q, label)
        reward, done, reason = task.outcome(q, q2, tr.time_limit)
        out.append(ProductTransition(tr.state, q, tr.action, reward, tr.next_state, q2,
                                     done, reason, tr.action_index, tr.time_limit))
    return out


def trajectory_labels(task: CompiledTask, traj: Trajectory) -> np.ndarray:
    if traj.labels is None or traj.constants != task.constants:
        traj.labels = task.table.label_batch(traj.states, task.constants)
    return traj.labels


def _time_limited(traj: Trajectory) -> bool:
    return bool(len(traj.time_limits)) and bool(traj.time_limits[-1])


def _with_run(traj: Trajectory, task, labels, q0, constants, start_q) -> Trajectory:
    qs, rewards, reasons, limits = rerun(task, traj.states, labels, q0, _time_limited(traj))
    n = len(rewards)
    return Trajectory(
        states=traj.states[: n + 1], qs=qs, actions=traj.actions[:n],
        action_indices=traj.action_indices[:n], rewards=rewards, done_reasons=reasons,
        time_limits=limits, constants=constants, start_q=start_q, labels=labels[: n + 1])


def crm_trajectory(task: CompiledTask, traj: Trajectory, q_start: int) -> Trajectory:
    """The trajectory re-run with the automaton forced into ``q_start`` at ``s_0``."""
    labels = trajectory_labels(task, traj)
    return _with_run(traj, task, labels, int(q_start), dict(traj.constants), int(q_start))


# --------------------------------------------------------------------------
# HER

def her_relabel(task: CompiledTask, traj: Trajectory, spec: GoalSpec) -> Trajectory:
    """Relabel with goal constants taken from the final raw state.

    The automaton is re-run from the trajectory's own start: the reset label
    for real trajectories, the imposed state for counterfactual copies.  The
    result is cut at its first terminating transition.
    """
    if not spec.goal_map:
        raise ValueError("HER needs at least one goal constant")
    delta = spec.achieved(task, traj.states[-1])
    table = task.table.substitute(delta)
    labels = table.label_batch(traj.states, task.constants)
    q0 = task.first_state(int(labels[0])) if traj.start_q is None else traj.start_q
    constants = {**task.constants, **delta}
    return _with_run(traj, task, labels, q0, constants, traj.start_q)


def crm_her_expand(task: CompiledTask, traj: Trajectory, spec: GoalSpec) -> list[Trajectory]:
    """``|Q|`` counterfactual copies followed by their ``|Q|`` hindsight relabelings."""
    copies = [crm_trajectory(task, traj, q) for q in range(task.num_states)]
    return copies + [her_relabel(task, c, spec) for c in copies]


# --------------------------------------------------------------------------
# replay buffer

@dataclass
class Batch:
    states: np.ndarray
    qs: np.ndarray
    actions: np.ndarray
    action_indices: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_qs: np.ndarray
    terminal: np.ndarray
    goals: np.ndarray
    tags: np.ndarray
    features: np.ndarray | None = None
    next_features: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity FIFO of tagged product transitions with uniform sampling.

    Not thread-safe: pushes and samples must be serialized by the caller.
    An optional ``encoder(states, goals) -> int array (n, k)`` is applied at
    push time and its output returned with each sample, so that learners
    with fixed features never recompute them.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int = 2, goal_dim: int = 0,
                 encoder=None, encoded_dim: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim, self.action_dim, self.goal_dim = state_dim, action_dim, goal_dim
        self.s = np.zeros((capacity, state_dim))
        self.q = np.zeros(capacity, dtype=np.int64)
        self.a = np.zeros((capacity, action_dim))
        self.ai = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.q2 = np.zeros(capacity, dtype=np.int64)
        self.reason = np.zeros(capacity, dtype=np.int8)
        self.limit = np.zeros(capacity, dtype=bool)
        self.g = np.zeros((capacity, goal_dim))
        self.tag = np.zeros(capacity, dtype=np.int8)
        self.encoder = encoder
        if encoder is not None:
            self.f = np.zeros((capacity, encoded_dim), dtype=np.int64)
            self.f2 = np.zeros((capacity, encoded_dim), dtype=np.int64)
        self.size = 0
        self.head = 0
        self.trajectories: Counter = Counter()

    def __len__(self) -> int:
        return self.size

    def _slots(self, n: int) -> np.ndarray:
        idx = (self.head + np.arange(n)) % self.capacity
        self.head = (self.head + n) % self.capacity
        self.size = min(self.capacity, self.size + n)
        return idx

    def push(self, tr: ProductTransition, tag: str = "real", goal=()):
        i = self._slots(1)[0]
        self.s[i], self.q[i], self.a[i], self.ai[i] = tr.state, tr.q, tr.action, tr.action_index
        self.r[i], self.s2[i], self.q2[i] = tr.reward, tr.next_state, tr.next_q
        self.reason[i] = _REASONS.index(tr.done_reason)
        self.limit[i] = tr.time_limit
        self.g[i] = goal
        self.tag[i] = TAGS.index(tag)
        if self.encoder is not None:
            pair = self._encode(np.stack([tr.state, tr.next_state]), goal)
            self.f[i], self.f2[i] = pair

    def push_many(self, transitions: Sequence[ProductTransition], tag: str = "real", goal=()):
        for tr in transitions:
            self.push(tr, tag, goal)

    def push_trajectory(self, traj: Trajectory, tag: str = "real", goal=()):
        n = len(traj)
        self.trajectories[tag] += 1
        if n == 0:
            return
        if n > self.capacity:
            traj_slice = slice(n - self.capacity, n)
            n = self.capacity
        else:
            traj_slice = slice(0, n)
        idx = self._slots(n)
        sl = traj_slice
        self.s[idx] = traj.states[:-1][sl]
        self.s2[idx] = traj.states[1:][sl]
        self.q[idx] = traj.qs[:-1][sl]
        self.q2[idx] = traj.qs[1:][sl]
        self.a[idx] = traj.actions[sl]
        self.ai[idx] = traj.action_indices[sl]
        self.r[idx] = traj.rewards[sl]
        self.reason[idx] = [_REASONS.index(x) for x in traj.done_reasons[sl]]
        self.limit[idx] = traj.time_limits[sl]
        self.g[idx] = goal
        self.tag[idx] = TAGS.index(tag)
        if self.encoder is not None:
            enc = self._encode(traj.states, goal)
            self.f[idx] = enc[:-1][sl]
            self.f2[idx] = enc[1:][sl]

    def _encode(self, states, goal):
        goals = np.broadcast_to(np.asarray(goal, dtype=float), (len(states), self.goal_dim))
        return self.encoder(states, goals if self.goal_dim else None)

    def census(self) -> dict:
        """Number of stored transitions per tag."""
        counts = np.bincount(self.tag[: self.size], minlength=len(TAGS))
        return {t: int(c) for t, c in zip(TAGS, counts)}

    def _batch(self, idx) -> Batch:
        reason = self.reason[idx]
        terminal = (reason == _REASONS.index("accepted")) | (reason == _REASONS.index("dead"))
        batch = Batch(self.s[idx], self.q[idx], self.a[idx], self.ai[idx], self.r[idx],
                      self.s2[idx], self.q2[idx], terminal, self.g[idx], self.tag[idx])
        if self.encoder is not None:
            batch.features, batch.next_features = self.f[idx], self.f2[idx]
        return batch

    def sample(self, n: int, rng=None) -> Batch:
        """``n`` uniform draws with replacement; ``rng`` is a Generator or a seed."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        idx = rng.integers(0, self.size, size=n) if n else np.zeros(0, dtype=np.int64)
        return self._batch(idx)

    def all(self) -> Batch:
        """Stored transitions, oldest first."""
        start = self.head if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return self._batch(idx)

    # dump / restore -------------------------------------------------------

    def to_csv(self, variables: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ad, gd = self.action_dim, self.goal_dim
        w.writerow(["step", *variables, *[f"a{i}" for i in range(ad)], "action_index", "q",
                    "reward", "done_reason", "time_limit",
                    *[f"next_{v}" for v in variables], "next_q",
                    *[f"g{i}" for i in range(gd)], "tag"])
        start = self.head if self.size == self.capacity else 0
        for k in range(self.size):
            i = (start + k) % self.capacity
            w.writerow([k, *map(repr, map(float, self.s[i])), *map(repr, map(float, self.a[i])),
                        int(self.ai[i]), int(self.q[i]), repr(float(self.r[i])),
                        _REASONS[self.reason[i]], int(self.limit[i]),
                        *map(repr, map(float, self.s2[i])), int(self.q2[i]),
                        *map(repr, map(float, self.g[i])), TAGS[self.tag[i]]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, capacity: int | None = None) -> "ReplayBuffer":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        ad = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
        gd = sum(1 for h in header if h.startswith("g") and h[1:].isdigit())
        sd = header.index("a0" if ad else "action_index") - 1
        buf = cls(capacity or max(1, len(body)), sd, ad, gd)
        for row in body:
            p = 1
            s = [float(v) for v in row[p:p + sd]]; p += sd
            a = [float(v) for v in row[p:p + ad]]; p += ad
            ai, q, r = int(row[p]), int(row[p + 1]), float(row[p + 2]); p += 3
            reason, limit = row[p], bool(int(row[p + 1])); p += 2
            s2 = [float(v) for v in row[p:p + sd]]; p += sd
            q2 = int(row[p]); p += 1
            g = [float(v) for v in row[p:p + gd]]; p += gd
            tr = ProductTransition(np.array(s), q, np.array(a), r, np.array(s2), q2,
                                   reason != NONE, reason, ai, limit)
            buf.push(tr, row[p], g)
        return buf
