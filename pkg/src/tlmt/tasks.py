"""Task corpus and JSON task configuration.

Parking checkpoints: A = (-0.2, -0.08), B = (0.2, -0.08).  Heading terms in
the box goals are written over ``sin_t``/``cos_t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .agent import TrainSpec
from .augment import GoalSpec
from .envs import ENVIRONMENTS, make_env
from .product import CompiledTask, compile_task

__all__ = ["CORPUS", "CorpusEntry", "TaskConfig", "ConfigError", "load_config", "corpus_config"]

_A = "(x + 0.2)^2 + (y + 0.08)^2 < 0.03^2"
_B = "(x - 0.2)^2 + (y + 0.08)^2 < 0.03^2"
_BALL = "(x - a)^2 + (y - b)^2 < 0.03^2"
_BOX = "abs(x - a) + 0.2*abs(y - b) + 0.02*abs(sin_t - c) + 0.02*abs(cos_t - d) < 0.0144"
_HAND_LEFT = "x <= -0.19"
_BASE = "x^2 + y^2 < 0.03^2"


def _either_order(goal: str) -> str:
    return (f"F({_A} && X F({_B} && X F({goal}))) || "
            f"F({_B} && X F({_A} && X F({goal})))")


@dataclass(frozen=True)
class CorpusEntry:
    formula: str
    constants: Mapping[str, float]
    goal_map: Mapping[str, str]
    env: str


_PARK_BALL = {"a": 0.2, "b": 0.08}
_PARK_BOX = {"a": 0.18, "b": 0.14, "c": 0.0, "d": 1.0}
_PARK_BALL_MAP = {"a": "x", "b": "y"}
_PARK_BOX_MAP = {"a": "x", "b": "y", "c": "sin_t", "d": "cos_t"}
_REACH = {"a": 0.1, "b": 0.1}

CORPUS: dict[str, CorpusEntry] = {
    "parking_1": CorpusEntry(f"F({_A} && X F({_BALL}))", _PARK_BALL, _PARK_BALL_MAP, "parking"),
    "parking_2": CorpusEntry(_either_order(_BALL), _PARK_BALL, _PARK_BALL_MAP, "parking"),
    "parking_3": CorpusEntry(f"F({_A} && X F({_BOX}))", _PARK_BOX, _PARK_BOX_MAP, "parking"),
    "parking_4": CorpusEntry(_either_order(_BOX), _PARK_BOX, _PARK_BOX_MAP, "parking"),
    "reacher_1": CorpusEntry(
        f"F({_HAND_LEFT} && X F((x - a)^2 + (y - b)^2 < 0.01^2))", _REACH, _PARK_BALL_MAP, "reacher"),
    "reacher_2": CorpusEntry(
        f"F({_HAND_LEFT} && X F({_BASE} && X F((x - a)^2 + (y - b)^2 < 0.01^2)))",
        _REACH, _PARK_BALL_MAP, "reacher"),
    "reacher_3": CorpusEntry(
        f"F({_HAND_LEFT} && X F({_BASE} && X F((x - a)^2 + (y - b)^2 < 0.005^2)))",
        _REACH, _PARK_BALL_MAP, "reacher"),
}

# desk-scale variant used by the learning experiment: both balls widened to 0.05
LITE_RADIUS = 0.05
CORPUS["parking_1_lite"] = CorpusEntry(
    CORPUS["parking_1"].formula.replace("0.03^2", f"{LITE_RADIUS}^2"),
    _PARK_BALL, _PARK_BALL_MAP, "parking")

# tile features for the parking learner: heading-aware grids over absolute
# and goal-relative position
PARKING_FEATURES = [
    {"inputs": ["x", "y", "sin_t", "cos_t"], "tiles": 8},
    {"inputs": ["x-a", "y-b", "sin_t", "cos_t"], "tiles": 8},
]


# learner settings shared by the parking tasks; a 0.1 step with 16 active
# tiles overshoots, and a decaying step keeps the late greedy policy steady
PARKING_AGENT = {"features": PARKING_FEATURES, "alpha": 0.02, "alpha_end": 0.002,
                 "epsilon_fraction": 0.3, "epsilon_end": 0.02, "batch_size": 128}

# the desk-scale learning experiment
LITE_AGENT = {**PARKING_AGENT, "episodes": 2000, "max_steps": 150,
              "eval_period": 100, "eval_episodes": 25}


class ConfigError(ValueError):
    pass


@dataclass
class TaskConfig:
    formula: str
    constants: dict
    env: dict
    goal_map: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    product: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, data: Mapping) -> "TaskConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {"formula", "constants", "env", "goal_map", "agent", "product", "name"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for key in ("formula", "env"):
            if key not in data:
                raise ConfigError(f"config is missing {key!r}")
        env = data["env"]
        if isinstance(env, str):
            env = {"name": env}
        if env.get("name") not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {env.get('name')!r}")
        try:
            constants = {str(k): float(v) for k, v in dict(data.get("constants", {})).items()}
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad constants: {e}") from None
        return cls(data["formula"], constants, dict(env), dict(data.get("goal_map", {})),
                   dict(data.get("agent", {})), dict(data.get("product", {})), data.get("name", ""))

    @property
    def variables(self) -> tuple:
        return ENVIRONMENTS[self.env["name"]][0].variables

    def goal_spec(self) -> GoalSpec:
        for c, v in self.goal_map.items():
            if v not in self.variables:
                raise ConfigError(f"goal_map target {v!r} is not a {self.env['name']} variable")
            if c not in self.constants:
                raise ConfigError(f"goal_map key {c!r} has no value in constants")
        return GoalSpec(self.goal_map)

    def train_spec(self, **overrides) -> TrainSpec:
        fields = {**self.agent, **{k: v for k, v in overrides.items() if v is not None}}
        try:
            return TrainSpec(**fields)
        except TypeError as e:
            raise ConfigError(f"bad agent section: {e}") from None

    def make_env(self, seed=None):
        try:
            return make_env(self.env["name"], self.env.get("params"), seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad env section: {e}") from None

    def compile(self, **kwargs) -> CompiledTask:
        """Compile the formula; syntax and compile errors propagate unchanged."""
        dst = bool(self.product.get("dead_state_termination", True))
        return compile_task(self.formula, self.constants, self.variables,
                            dead_state_termination=dst, **kwargs)


def load_config(path) -> TaskConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return TaskConfig.from_dict(data)


def corpus_config(name: str, **agent) -> TaskConfig:
    """A TaskConfig for a corpus entry."""
    e = CORPUS[name]
    if name == "parking_1_lite":
        agent_defaults = LITE_AGENT
    else:
        agent_defaults = PARKING_AGENT if e.env == "parking" else {}
    return TaskConfig(e.formula, dict(e.constants), {"name": e.env}, dict(e.goal_map),
                      {**agent_defaults, **agent}, {}, name)
