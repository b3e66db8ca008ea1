"""Built-in continuous-control environments, observation noise and noise curricula.

Every environment is a pure function pair: :func:`reset` draws an initial
:class:`EnvState` and :func:`step` integrates the dynamics with RK4. Actions are
normalized to ``[-1, 1]`` per coordinate and clamped before use.

Dynamics:

- ``pendulum``: angle measured from upright, ``theta'' = 14.7 sin(theta) + 6 u``
  (g = 9.8, l = 1, max torque 2), velocity clamped to ``[-8, 8]``,
  reward ``-(theta^2 + 0.1 theta'^2 + 0.001 u^2)``.
- ``cartpole_continuous``: classic cart-pole equations with force ``10 u``;
  fails when ``|x| > 2.4`` or ``|theta| > 12 deg``; reward ``+1`` per step.
- ``pointmass``: damped planar double integrator driven toward the origin,
  reward ``-(|p|^2 + 0.1 |v|^2 + 0.001 |u|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ErrorCode, TeachLoopError

ENV_NAMES = ("pendulum", "cartpole_continuous", "pointmass")
CURRICULUM_SHAPES = ("linear", "constant")

PENDULUM_GRAVITY_GAIN = 14.7
PENDULUM_TORQUE_GAIN = 6.0
PENDULUM_MAX_SPEED = 8.0

CARTPOLE_GRAVITY = 9.8
CARTPOLE_CART_MASS = 1.0
CARTPOLE_POLE_MASS = 0.1
CARTPOLE_HALF_LENGTH = 0.5
CARTPOLE_FORCE_GAIN = 10.0
CARTPOLE_X_LIMIT = 2.4
CARTPOLE_THETA_LIMIT = 12.0 * math.pi / 180.0

POINTMASS_ACCEL_GAIN = 2.0
POINTMASS_DAMPING = 0.5

# Relative slack for the noise-box check; o = s + alpha*eps rounds once.
NOISE_BOX_RTOL = 1e-12


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    obs_dim: int
    action_dim: int
    action_low: float = -1.0
    action_high: float = 1.0
    dt: float = 0.05
    horizon: int = 200
    gamma: float = 0.99
    substeps: int = 4
    angle_indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.name not in ENV_NAMES:
            raise TeachLoopError(
                ErrorCode.INVALID_INPUT,
                f"Unknown environment '{self.name}'. Expected one of {'|'.join(ENV_NAMES)}.",
            )
        if self.obs_dim != self.state_dim:
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"obs_dim ({self.obs_dim}) must equal state_dim ({self.state_dim}).",
            )
        if self.horizon < 1:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "Environment horizon must be >= 1.")
        if not 0.0 < self.gamma <= 1.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"gamma must lie in (0, 1], got {self.gamma}.")
        if self.action_low >= self.action_high:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "action_low must be below action_high.")
        if self.dt <= 0.0 or self.substeps < 1:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "dt must be positive and substeps >= 1.")


@dataclass(frozen=True)
class EnvState:
    """``terminated`` marks a failure; ``done`` also covers the time limit."""

    s: np.ndarray
    t: int = 0
    done: bool = False
    terminated: bool = False


@dataclass(frozen=True)
class NoiseModel:
    alpha: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Noise alpha must be finite and >= 0, got {self.alpha}.")


@dataclass(frozen=True)
class CurriculumSchedule:
    alpha_target: float
    ramp_steps: int = 0
    shape: str = "linear"

    def __post_init__(self) -> None:
        if self.shape not in CURRICULUM_SHAPES:
            raise TeachLoopError(
                ErrorCode.INVALID_INPUT,
                f"Unknown curriculum shape '{self.shape}'. Expected linear|constant.",
            )
        if self.alpha_target < 0.0 or self.ramp_steps < 0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "Curriculum needs alpha_target >= 0 and ramp_steps >= 0.")


_SPEC_DEFAULTS: dict[str, dict] = {
    "pendulum": {"state_dim": 2, "obs_dim": 2, "action_dim": 1, "horizon": 200, "angle_indices": (0,)},
    "cartpole_continuous": {"state_dim": 4, "obs_dim": 4, "action_dim": 1, "horizon": 500},
    "pointmass": {"state_dim": 4, "obs_dim": 4, "action_dim": 2, "horizon": 200},
}


def make_env_spec(name: str, gamma: float = 0.99, horizon: int | None = None, dt: float = 0.05) -> EnvSpec:
    defaults = _SPEC_DEFAULTS.get(name)
    if defaults is None:
        raise TeachLoopError(
            ErrorCode.INVALID_INPUT,
            f"Unknown environment '{name}'. Expected one of {'|'.join(ENV_NAMES)}.",
        )
    params = dict(defaults)
    if horizon is not None:
        params["horizon"] = int(horizon)
    return EnvSpec(name=name, gamma=float(gamma), dt=float(dt), **params)


def wrap_angle(theta):
    """Map angles into ``(-pi, pi]``."""

    return math.pi - np.mod(math.pi - np.asarray(theta, dtype=np.float64), 2.0 * math.pi)


def reset(spec: EnvSpec, seed) -> EnvState:
    rng = np.random.default_rng(seed)
    if spec.name == "pendulum":
        s = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])
        s[0] = wrap_angle(s[0])
    elif spec.name == "cartpole_continuous":
        s = rng.uniform(-0.05, 0.05, size=4)
    else:
        s = np.concatenate([rng.uniform(-1.0, 1.0, size=2), np.zeros(2)])
    return EnvState(s=s, t=0, done=False)


def _pendulum_deriv(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.array([x[1], PENDULUM_GRAVITY_GAIN * math.sin(x[0]) + PENDULUM_TORQUE_GAIN * u[0]])


def _cartpole_deriv(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    _, x_dot, theta, theta_dot = x
    total_mass = CARTPOLE_CART_MASS + CARTPOLE_POLE_MASS
    pole_mass_length = CARTPOLE_POLE_MASS * CARTPOLE_HALF_LENGTH
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    force = CARTPOLE_FORCE_GAIN * u[0]
    temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass
    theta_acc = (CARTPOLE_GRAVITY * sin_t - cos_t * temp) / (
        CARTPOLE_HALF_LENGTH * (4.0 / 3.0 - CARTPOLE_POLE_MASS * cos_t * cos_t / total_mass)
    )
    x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass
    return np.array([x_dot, x_acc, theta_dot, theta_acc])


def _pointmass_deriv(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    vel = x[2:]
    return np.concatenate([vel, POINTMASS_ACCEL_GAIN * u - POINTMASS_DAMPING * vel])


_DERIVS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "pendulum": _pendulum_deriv,
    "cartpole_continuous": _cartpole_deriv,
    "pointmass": _pointmass_deriv,
}


def rk4(f: Callable[[np.ndarray, np.ndarray], np.ndarray], x: np.ndarray, u: np.ndarray, dt: float, substeps: int = 1) -> np.ndarray:
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _reward(spec: EnvSpec, s: np.ndarray, u: np.ndarray) -> float:
    if spec.name == "pendulum":
        return -float(s[0] ** 2 + 0.1 * s[1] ** 2 + 0.001 * u[0] ** 2)
    if spec.name == "cartpole_continuous":
        return 1.0
    return -float(np.dot(s[:2], s[:2]) + 0.1 * np.dot(s[2:], s[2:]) + 0.001 * np.dot(u, u))


def _failed(spec: EnvSpec, s: np.ndarray) -> bool:
    if spec.name == "cartpole_continuous":
        return bool(abs(s[0]) > CARTPOLE_X_LIMIT or abs(s[2]) > CARTPOLE_THETA_LIMIT)
    return False


def clamp_action(spec: EnvSpec, action) -> np.ndarray:
    u = np.asarray(action, dtype=np.float64).reshape(-1)
    if u.shape != (spec.action_dim,):
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"{spec.name} expects {spec.action_dim} action entries, got {u.shape[0]}.",
        )
    if not np.all(np.isfinite(u)):
        raise TeachLoopError(ErrorCode.NUMERIC_ERROR, f"Non-finite action {u.tolist()} for {spec.name}.")
    return np.clip(u, spec.action_low, spec.action_high)


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, float]:
    if state.done:
        raise TeachLoopError(
            ErrorCode.CONTRACT_ERROR,
            f"Cannot step a finished {spec.name} episode (t={state.t}).",
            hint="Call reset() to start a new episode.",
        )
    u = clamp_action(spec, action)
    reward = _reward(spec, state.s, u)

    x = rk4(_DERIVS[spec.name], np.array(state.s, dtype=np.float64), u, spec.dt, spec.substeps)
    if spec.name == "pendulum":
        x[1] = min(max(x[1], -PENDULUM_MAX_SPEED), PENDULUM_MAX_SPEED)
    for index in spec.angle_indices:
        x[index] = wrap_angle(x[index])

    t = state.t + 1
    terminated = _failed(spec, x)
    done = terminated or t >= spec.horizon
    return EnvState(s=x, t=t, done=done, terminated=terminated), reward


def observe(s, noise: NoiseModel | float, rng: np.random.Generator) -> np.ndarray:
    """``o_i = s_i + alpha * eps_i`` with ``eps_i ~ U[-|s_i|, |s_i|]``.

    The draw happens for every call so the generator advances identically
    whatever ``alpha`` is.
    """

    alpha = noise.alpha if isinstance(noise, NoiseModel) else float(noise)
    s = np.asarray(s, dtype=np.float64)
    unit = rng.uniform(-1.0, 1.0, size=s.shape)
    if alpha == 0.0:
        return s.copy()
    return s + alpha * (np.abs(s) * unit)


def within_noise_box(s, o, alpha: float) -> bool:
    s = np.asarray(s, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if s.shape != o.shape:
        return False
    bound = alpha * np.abs(s) + NOISE_BOX_RTOL * np.abs(s)
    return bool(np.all(np.abs(o - s) <= bound))


def curriculum_alpha(sched: CurriculumSchedule, k: int) -> float:
    if k < 0:
        raise TeachLoopError(ErrorCode.CONTRACT_ERROR, f"Curriculum step index must be >= 0, got {k}.")
    if sched.shape == "constant" or sched.ramp_steps == 0 or k >= sched.ramp_steps:
        return float(sched.alpha_target)
    return float(sched.alpha_target) * (k / sched.ramp_steps)


def random_action(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(spec.action_low, spec.action_high, size=spec.action_dim)


@dataclass(frozen=True)
class OracleGains:
    energy_gain: float = 0.5
    catch_angle: float = 0.45
    kp: float = 40.0
    kd: float = 10.0
    pointmass_kp: float = 2.0
    pointmass_kd: float = 2.0


DEFAULT_ORACLE = OracleGains()


def pendulum_energy(s) -> float:
    theta, theta_dot = float(s[0]), float(s[1])
    return 0.5 * theta_dot * theta_dot + PENDULUM_GRAVITY_GAIN * (math.cos(theta) - 1.0)


def scripted_oracle(spec: EnvSpec, state: EnvState | np.ndarray, gains: OracleGains = DEFAULT_ORACLE) -> np.ndarray:
    """Near-optimal reference controller for pendulum and pointmass."""

    s = np.asarray(state.s if isinstance(state, EnvState) else state, dtype=np.float64)
    if spec.name == "pendulum":
        theta = float(wrap_angle(s[0]))
        theta_dot = float(s[1])
        if abs(theta) < gains.catch_angle:
            u = -(gains.kp * theta + gains.kd * theta_dot) / PENDULUM_TORQUE_GAIN
        else:
            direction = 1.0 if theta_dot >= 0.0 else -1.0
            u = gains.energy_gain * -pendulum_energy(s) * direction
        return np.clip(np.array([u]), spec.action_low, spec.action_high)
    if spec.name == "pointmass":
        u = -(gains.pointmass_kp * s[:2] + gains.pointmass_kd * s[2:]) / POINTMASS_ACCEL_GAIN
        return np.clip(u, spec.action_low, spec.action_high)
    raise TeachLoopError(
        ErrorCode.INVALID_INPUT,
        f"No scripted oracle for '{spec.name}'.",
        hint="The oracle supports pendulum and pointmass.",
    )