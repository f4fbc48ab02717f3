"""Tile-coded linear Q-learning over the product MDP.

The automaton state is an exact index into the weight table; only the
environment state (optionally offset by goal constants) is tile coded.
Goal-relative inputs such as ``x - a`` make the value function generalize
across hindsight goals, which is what lets relabeled experience help.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .augment import (
    GoalSpec, ReplayBuffer, crm_expand, crm_her_expand, her_relabel,
)
from .product import CompiledTask, ProductState, Trajectory, rollout

__all__ = [
    "MODES", "TileCoder", "TileGroup", "QFunction", "TrainSpec", "METRIC_FIELDS",
    "act", "td_update", "train", "evaluate", "evaluate_policy", "run_episode", "build_qfunction",
    "final_success",
]

MODES = ("baseline", "crm", "her", "crm_her")
METRIC_FIELDS = ("seed", "episode", "steps", "return", "success", "mode",
                 "buffer_real", "buffer_crm", "buffer_her", "buffer_crm_her", "eval_success")


@dataclass
class TileGroup:
    """One tiling grid over some inputs.

    Each input is ``"v"`` (a state variable) or ``"v-c"`` (state variable
    minus goal constant).  ``low``/``high`` bound every input of the group.
    """
    inputs: Sequence[str]
    low: float = -1.0
    high: float = 1.0
    tiles: int = 8


class TileCoder:
    """Grid tilings with asymmetric offsets, one active tile per tiling per group.

    All groups are evaluated in one pass: inputs are a linear map of the
    state and goal vectors, padded to the widest group with zero-stride dims.
    """

    def __init__(self, groups: Sequence[TileGroup], variables: Sequence[str],
                 goal_constants: Sequence[str] = (), tilings: int = 8):
        variables, goal_constants = list(variables), list(goal_constants)
        self.tilings = tilings
        ng = len(groups)
        width = max((len(g.inputs) for g in groups), default=1)
        cols = ng * width
        self.state_map = np.zeros((len(variables), cols))
        self.goal_map = np.zeros((len(goal_constants), cols))
        self.low = np.zeros(cols)
        self.scale = np.zeros(cols)
        self.top = np.zeros(cols)
        self.shifts = np.zeros((tilings, cols))
        strides = np.zeros(cols, dtype=np.int64)
        base = np.zeros((tilings, ng), dtype=np.int64)
        offset = 0
        for gi, g in enumerate(groups):
            d = len(g.inputs)
            if d == 0 or g.tiles < 1 or not g.high > g.low:
                raise ValueError(f"bad tile group {g!r}")
            for j, spec in enumerate(g.inputs):
                c = gi * width + j
                name, _, const = (part.strip() for part in spec.partition("-"))
                if name not in variables:
                    raise ValueError(f"tile input {spec!r}: unknown variable {name!r}")
                self.state_map[variables.index(name), c] = 1.0
                if const:
                    if const not in goal_constants:
                        raise ValueError(f"tile input {spec!r}: {const!r} is not a goal constant")
                    self.goal_map[goal_constants.index(const), c] = 1.0
                self.low[c] = g.low
                self.scale[c] = g.tiles / (g.high - g.low)
                self.top[c] = g.tiles
                self.shifts[:, c] = ((2 * j + 1) * np.arange(tilings) % tilings) / tilings
                strides[c] = (g.tiles + 1) ** j
            cells = (g.tiles + 1) ** d
            base[:, gi] = offset + cells * np.arange(tilings)
            offset += cells * tilings
        # block matrix folding each group's cell coordinates into one index
        self.fold = np.zeros((cols, ng), dtype=np.int64)
        for gi in range(ng):
            self.fold[gi * width:(gi + 1) * width, gi] = strides[gi * width:(gi + 1) * width]
        self.base = base
        self.num_features = offset
        self.active = tilings * ng

    def __call__(self, states: np.ndarray, goals: np.ndarray | None = None) -> np.ndarray:
        """Active feature indices, shape ``(batch, active)``."""
        x = np.atleast_2d(states) @ self.state_map
        if goals is not None and len(self.goal_map):
            x -= np.atleast_2d(goals) @ self.goal_map
        u = (x - self.low) * self.scale
        # clipping first makes truncation agree with floor
        v = u[:, None, :] + self.shifts
        cells = np.minimum(np.maximum(v, 0.0, out=v), self.top, out=v).astype(np.int64)
        idx = cells @ self.fold + self.base
        return idx.reshape(len(u), self.active)


class QFunction:
    """Linear action values ``Q(s, q, a) = sum_k W[phi_k(s), q, a]``."""

    def __init__(self, coder: TileCoder, num_q: int, num_actions: int,
                 alpha: float = 0.1, gamma: float = 0.99):
        self.coder = coder
        self.num_q, self.num_actions = num_q, num_actions
        self.alpha, self.gamma = alpha, gamma
        self.weights = np.zeros((coder.num_features, num_q, num_actions))
        self._scratch = None

    def scratch(self):
        """Zeroed per-weight accumulators for batch updates, kept between calls."""
        if self._scratch is None:
            self._scratch = (np.zeros(self.weights.size), np.zeros(self.weights.size))
        return self._scratch

    def values(self, states, qs, goals=None) -> np.ndarray:
        feats = self.coder(states, goals)
        qs = np.asarray(qs, dtype=np.int64).reshape(-1)
        rows = self.weights.reshape(-1, self.num_actions)
        return rows.take(feats * self.num_q + qs[:, None], axis=0).sum(axis=1)

    def value(self, state, q: int, goal=None) -> np.ndarray:
        return self.values(state[None, :], [q], None if goal is None else np.asarray(goal)[None, :])[0]

    def save(self, path):
        np.savez_compressed(path, weights=self.weights, alpha=self.alpha, gamma=self.gamma)

    def load_weights(self, path):
        with np.load(path) as data:
            if data["weights"].shape != self.weights.shape:
                raise ValueError(f"weight shape {data['weights'].shape} != {self.weights.shape}")
            self.weights = data["weights"].copy()


def act(qf: QFunction, ps: ProductState, epsilon: float, rng: np.random.Generator,
        goal=None) -> int:
    """Epsilon-greedy action index; greedy ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(qf.num_actions))
    return int(np.argmax(qf.value(ps.env_state, ps.q, goal)))


def td_update(qf: QFunction, batch) -> float:
    """Semi-gradient Q-learning step on a batch; returns the mean absolute TD error.

    Terminal transitions (accepted or dead) bootstrap zero; time-limit
    truncations bootstrap normally.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    feats, feats2 = batch.features, batch.next_features
    if feats is None:
        goals = batch.goals if batch.goals.shape[1] else None
        feats = qf.coder(batch.states, goals)
        feats2 = qf.coder(batch.next_states, goals)
    flat = qf.weights.reshape(-1)
    cell = (feats * qf.num_q + batch.qs[:, None]) * qf.num_actions + batch.action_indices[:, None]
    q_sa = flat.take(cell).sum(axis=1)
    rows = qf.weights.reshape(-1, qf.num_actions)
    q_next = rows.take(feats2 * qf.num_q + batch.next_qs[:, None], axis=0).sum(axis=1).max(axis=1)
    target = batch.rewards + qf.gamma * q_next * (~batch.terminal)
    err = target - q_sa
    # average the per-sample steps landing on the same weight so that a
    # large batch never moves one weight further than a single sample would
    cell = cell.ravel()
    step = np.repeat((qf.alpha / qf.coder.active) * err, feats.shape[1])
    total, count = qf.scratch()
    np.add.at(total, cell, step)
    np.add.at(count, cell, 1.0)
    # duplicates of a cell all write the same averaged value
    flat[cell] += total[cell] / count[cell]
    total[cell] = 0.0
    count[cell] = 0.0
    return float(np.mean(np.abs(err)))


@dataclass
class TrainSpec:
    episodes: int = 2000
    max_steps: int = 200
    mode: str = "crm_her"
    seed: int = 0
    alpha: float = 0.1
    alpha_end: float | None = None
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.6
    batch_size: int = 64
    updates_per_step: float = 0.25
    buffer_capacity: int = 100_000
    eval_period: int = 25
    eval_episodes: int = 20
    tilings: int = 8
    features: list = field(default_factory=lambda: [{"inputs": ["x", "y"], "tiles": 8}])

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_steps < 1 or self.episodes < 0:
            raise ValueError("episodes must be >= 0 and max_steps >= 1")

    def epsilon(self, episode: int) -> float:
        horizon = max(1.0, self.epsilon_fraction * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def learning_rate(self, episode: int) -> float:
        """Constant ``alpha``, or linear decay to ``alpha_end`` over all episodes."""
        if self.alpha_end is None:
            return self.alpha
        frac = min(1.0, episode / max(1, self.episodes - 1))
        return self.alpha + frac * (self.alpha_end - self.alpha)

    def to_dict(self) -> dict:
        return asdict(self)


def build_qfunction(task: CompiledTask, env, spec: TrainSpec, goal_spec: GoalSpec | None) -> QFunction:
    groups = [TileGroup(**g) for g in spec.features]
    goal_constants = goal_spec.constants if goal_spec else ()
    coder = TileCoder(groups, task.variables, goal_constants, spec.tilings)
    return QFunction(coder, task.num_states, env.num_actions, spec.alpha, spec.gamma)


def run_episode(task: CompiledTask, env, qf: QFunction, epsilon: float,
                rng: np.random.Generator, max_steps: int, goal=None) -> Trajectory:
    def policy(ps):
        return act(qf, ps, epsilon, rng, goal)
    return rollout(task, env, policy, max_steps)


def evaluate_policy(task: CompiledTask, env, policy, n_episodes: int, max_steps: int = 200) -> float:
    """Success rate of an arbitrary ``policy(ProductState)`` over ``n_episodes``."""
    if n_episodes <= 0:
        return float("nan")
    return sum(rollout(task, env, policy, max_steps).success for _ in range(n_episodes)) / n_episodes


def evaluate(task: CompiledTask, env, qf: QFunction, n_episodes: int, max_steps: int = 200,
             goal_spec: GoalSpec | None = None) -> float:
    """Greedy success rate over ``n_episodes``."""
    goal = goal_spec.vector(task.constants) if goal_spec and goal_spec.goal_map else None
    rng = np.random.default_rng(0)
    return evaluate_policy(task, env, lambda ps: act(qf, ps, 0.0, rng, goal), n_episodes, max_steps)


def _store(buffer: ReplayBuffer, task: CompiledTask, traj: Trajectory, mode: str,
           goal_spec: GoalSpec | None):
    def goal_of(t):
        return goal_spec.vector(t.constants) if goal_spec and goal_spec.goal_map else ()

    buffer.push_trajectory(traj, "real", goal_of(traj))
    if mode == "crm":
        g = goal_of(traj)
        buffer.trajectories["crm"] += task.num_states
        for tr in traj.transitions():
            buffer.push_many(crm_expand(task, tr), "crm", g)
    elif mode == "her":
        relabeled = her_relabel(task, traj, goal_spec)
        buffer.push_trajectory(relabeled, "her", goal_of(relabeled))
    elif mode == "crm_her":
        out = crm_her_expand(task, traj, goal_spec)
        k = task.num_states
        for i, t in enumerate(out):
            buffer.push_trajectory(t, "crm" if i < k else "crm_her", goal_of(t))


def train(task: CompiledTask, env, spec: TrainSpec, goal_spec: GoalSpec | None = None,
          eval_env=None, qf: QFunction | None = None):
    """Train from scratch; returns ``(metrics_rows, qfunction, buffer)``.

    One metrics row per training episode; ``eval_success`` is filled on the
    episodes after which a greedy evaluation ran.
    """
    if spec.mode in ("her", "crm_her") and not (goal_spec and goal_spec.goal_map):
        raise ValueError(f"mode {spec.mode!r} needs a goal map")
    if goal_spec is not None:
        goal_spec.validate(task)
    seeds = np.random.SeedSequence(spec.seed).spawn(4)
    env.seed(seeds[0])
    if eval_env is not None:
        eval_env.seed(seeds[1])
    act_rng = np.random.default_rng(seeds[2])
    sample_rng = np.random.default_rng(seeds[3])
    qf = qf or build_qfunction(task, env, spec, goal_spec)
    goal_dim = len(goal_spec.goal_map) if goal_spec else 0
    buffer = ReplayBuffer(spec.buffer_capacity, len(task.variables), env.action_dim, goal_dim,
                          encoder=qf.coder, encoded_dim=qf.coder.active)
    goal = goal_spec.vector(task.constants) if goal_dim else None
    rows = []
    credit = 0.0
    for ep in range(spec.episodes):
        qf.alpha = spec.learning_rate(ep)
        traj = run_episode(task, env, qf, spec.epsilon(ep), act_rng, spec.max_steps, goal)
        _store(buffer, task, traj, spec.mode, goal_spec)
        credit += len(traj) * spec.updates_per_step
        while credit >= 1.0 and len(buffer):
            td_update(qf, buffer.sample(spec.batch_size, sample_rng))
            credit -= 1.0
        census = buffer.census()
        row = {
            "seed": spec.seed, "episode": ep, "steps": len(traj),
            "return": traj.total_reward, "success": int(traj.success), "mode": spec.mode,
            "buffer_real": census["real"], "buffer_crm": census["crm"],
            "buffer_her": census["her"], "buffer_crm_her": census["crm_her"], "eval_success": "",
        }
        if eval_env is not None and spec.eval_period > 0 and (ep + 1) % spec.eval_period == 0:
            row["eval_success"] = _greedy_success(task, eval_env, qf, spec, goal)
        rows.append(row)
    return rows, qf, buffer


def _greedy_success(task, env, qf, spec, goal) -> float:
    rng = np.random.default_rng(0)
    return evaluate_policy(task, env, lambda ps: act(qf, ps, 0.0, rng, goal),
                           spec.eval_episodes, spec.max_steps)


def final_success(rows: list[dict], last: int = 50, eval_episodes: int = 20) -> float:
    """Mean success over the last ``last`` evaluation episodes."""
    evals = [r["eval_success"] for r in rows if r["eval_success"] != ""]
    need = math.ceil(last / eval_episodes)
    chunk = evals[-need:]
    if not chunk:
        return float("nan")
    # weight the oldest chunk so exactly `last` episodes count
    weights = [eval_episodes] * len(chunk)
    weights[0] -= need * eval_episodes - last
    return float(np.dot(chunk, weights) / sum(weights))
