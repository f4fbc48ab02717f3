"""Small kinematic control environments with named state variables.

``parking``: kinematic bicycle in a square lot, state
``(x, y, vx, vy, sin_t, cos_t)``, action ``(throttle, steering)``.

``reacher``: planar two-link arm driven by joint accelerations, state
``(sin1, cos1, sin2, cos2, w1, w2, xt, yt, x, y, z)`` with ``(x, y)`` the hand
position from forward kinematics.

Both integrate with semi-implicit Euler (velocities first, then positions)
and clamp actions to ``[-1, 1]``.  Each environment also exposes a 3x3 grid
of discrete actions for tabular-style learners.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "ParkingParams", "ReacherParams", "ParkingEnv", "ReacherEnv",
    "PARKING_VARIABLES", "REACHER_VARIABLES",
    "parking_reset", "parking_step", "reacher_reset", "reacher_step",
    "forward_kinematics", "make_env", "ENVIRONMENTS",
]

PARKING_VARIABLES = ("x", "y", "vx", "vy", "sin_t", "cos_t")
REACHER_VARIABLES = ("sin1", "cos1", "sin2", "cos2", "w1", "w2", "xt", "yt", "x", "y", "z")

_GRID = np.array(list(product((-1.0, 0.0, 1.0), repeat=2)))


@dataclass
class ParkingParams:
    dt: float = 0.1
    bound: float = 1.0
    max_accel: float = 1.0
    max_speed: float = 0.3
    max_steer: float = 0.6
    wheelbase: float = 0.05
    start: tuple = (0.0, -0.3)
    start_radius: float = 0.02
    start_heading: float = math.pi / 2
    seed: int | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("bound", "max_accel", "max_speed", "max_steer", "wheelbase"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive")
        self.start = tuple(float(v) for v in self.start)


def parking_reset(params: ParkingParams, seed=None) -> np.ndarray:
    """Uniform start in a disc around ``params.start``, at rest, fixed heading."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r = params.start_radius * math.sqrt(rng.random())
    a = 2 * math.pi * rng.random()
    x = params.start[0] + r * math.cos(a)
    y = params.start[1] + r * math.sin(a)
    th = params.start_heading
    return np.array([x, y, 0.0, 0.0, math.sin(th), math.cos(th)])


def parking_step(state, action, params: ParkingParams) -> np.ndarray:
    x, y, vx, vy, s, c = (float(v) for v in state)
    throttle = min(1.0, max(-1.0, float(action[0])))
    steer = min(1.0, max(-1.0, float(action[1]))) * params.max_steer
    dt = params.dt
    speed = vx * c + vy * s
    speed = min(params.max_speed, max(-params.max_speed, speed + throttle * params.max_accel * dt))
    theta = math.atan2(s, c) + speed / params.wheelbase * math.tan(steer) * dt
    s, c = math.sin(theta), math.cos(theta)
    x += speed * c * dt
    y += speed * s * dt
    b = params.bound
    if not (-b <= x <= b and -b <= y <= b):
        x = min(b, max(-b, x))
        y = min(b, max(-b, y))
        speed = 0.0
    return np.array([x, y, speed * c, speed * s, s, c])


@dataclass
class ReacherParams:
    dt: float = 0.1
    link1: float = 0.1
    link2: float = 0.1
    max_accel: float = 4.0
    max_speed: float = 2.0
    start_range: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("link1", "link2", "max_accel", "max_speed", "start_range"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def forward_kinematics(theta1: float, theta2: float, l1: float = 0.1, l2: float = 0.1):
    return (l1 * math.cos(theta1) + l2 * math.cos(theta1 + theta2),
            l1 * math.sin(theta1) + l2 * math.sin(theta1 + theta2))


def _reacher_state(t1, t2, w1, w2, params):
    x, y = forward_kinematics(t1, t2, params.link1, params.link2)
    return np.array([math.sin(t1), math.cos(t1), math.sin(t2), math.cos(t2),
                     w1, w2, 0.0, 0.0, x, y, 0.0])


def reacher_reset(params: ReacherParams, seed=None) -> np.ndarray:
    """Joint angles uniform in ``[-start_range, start_range]``, at rest."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t1, t2 = rng.uniform(-params.start_range, params.start_range, size=2)
    return _reacher_state(float(t1), float(t2), 0.0, 0.0, params)


def reacher_step(state, action, params: ReacherParams) -> np.ndarray:
    s1, c1, s2, c2, w1, w2 = (float(v) for v in state[:6])
    a1 = min(1.0, max(-1.0, float(action[0])))
    a2 = min(1.0, max(-1.0, float(action[1])))
    lim = params.max_speed
    w1 = min(lim, max(-lim, w1 + a1 * params.max_accel * params.dt))
    w2 = min(lim, max(-lim, w2 + a2 * params.max_accel * params.dt))
    t1 = math.atan2(s1, c1) + w1 * params.dt
    t2 = math.atan2(s2, c2) + w2 * params.dt
    return _reacher_state(t1, t2, w1, w2, params)


class _Env:
    variables: tuple
    action_grid = _GRID
    action_dim = 2

    def __init__(self, params, seed=None):
        self.params = params
        self.rng = np.random.default_rng(params.seed if seed is None else seed)
        self.state = None

    @property
    def num_actions(self) -> int:
        return len(self.action_grid)

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self) -> np.ndarray:
        self.state = self._reset(self.params, self.rng)
        return self.state.copy()

    def step(self, action) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("step() before reset()")
        if np.ndim(action) == 0:
            action = self.action_grid[int(action)]
        self.state = self._step(self.state, action, self.params)
        return self.state.copy()

    def config(self) -> dict:
        return asdict(self.params)


class ParkingEnv(_Env):
    name = "parking"
    variables = PARKING_VARIABLES
    _reset = staticmethod(parking_reset)
    _step = staticmethod(parking_step)

    def __init__(self, params: ParkingParams | None = None, seed=None):
        super().__init__(params or ParkingParams(), seed)


class ReacherEnv(_Env):
    name = "reacher"
    variables = REACHER_VARIABLES
    _reset = staticmethod(reacher_reset)
    _step = staticmethod(reacher_step)

    def __init__(self, params: ReacherParams | None = None, seed=None):
        super().__init__(params or ReacherParams(), seed)


ENVIRONMENTS = {"parking": (ParkingEnv, ParkingParams), "reacher": (ReacherEnv, ReacherParams)}


def make_env(name: str, params: dict | None = None, seed=None):
    try:
        cls, pcls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(pcls(**(params or {})), seed=seed)
