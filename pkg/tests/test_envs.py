"""Environment dynamics, observation noise and curriculum tests."""

import math

import numpy as np
import pytest

from teachloop.envs import (
    CurriculumSchedule,
    EnvSpec,
    EnvState,
    NoiseModel,
    curriculum_alpha,
    make_env_spec,
    observe,
    pendulum_energy,
    reset,
    scripted_oracle,
    step,
    within_noise_box,
    wrap_angle,
)
from teachloop.errors import ErrorCode, TeachLoopError


def test_unknown_environment_is_rejected():
    with pytest.raises(TeachLoopError) as exc:
        make_env_spec("mountaincar")
    assert exc.value.code == ErrorCode.INVALID_INPUT


def test_observation_dim_must_match_state_dim():
    with pytest.raises(TeachLoopError) as exc:
        EnvSpec(name="pendulum", state_dim=2, obs_dim=3, action_dim=1)
    assert exc.value.code == ErrorCode.DIMENSION_ERROR


def test_reset_is_deterministic_per_seed():
    spec = make_env_spec("cartpole_continuous")
    first = reset(spec, 11)
    second = reset(spec, 11)
    assert np.array_equal(first.s, second.s)
    assert first.t == 0 and not first.done
    assert np.all(np.abs(first.s) <= 0.05)


def test_hanging_pendulum_stays_put_without_torque():
    spec = make_env_spec("pendulum")
    state = EnvState(s=np.array([math.pi, 0.0]))
    next_state, reward = step(spec, state, np.array([0.0]))
    assert abs(abs(next_state.s[0]) - math.pi) < 1e-9
    assert abs(next_state.s[1]) < 1e-9
    assert reward == pytest.approx(-(math.pi**2))


def test_pendulum_energy_is_conserved_without_torque():
    spec = make_env_spec("pendulum")
    state = EnvState(s=np.array([math.pi / 2.0, 0.0]))
    start_energy = pendulum_energy(state.s)
    for _ in range(200):
        state, _ = step(spec, state, np.array([0.0]))
    assert abs(pendulum_energy(state.s) - start_energy) <= 1e-4 * abs(start_energy)


def test_pendulum_angle_stays_wrapped():
    spec = make_env_spec("pendulum")
    state = reset(spec, 3)
    for _ in range(spec.horizon):
        state, _ = step(spec, state, np.array([1.0]))
        assert -math.pi < state.s[0] <= math.pi
        assert abs(state.s[1]) <= 8.0
    assert state.done and not state.terminated


def test_wrap_angle_range():
    angles = np.array([-3.0 * math.pi, -math.pi, 0.0, math.pi, 2.5 * math.pi])
    wrapped = wrap_angle(angles)
    assert np.all(wrapped > -math.pi) and np.all(wrapped <= math.pi)
    assert wrapped[1] == pytest.approx(math.pi)


def test_stepping_a_finished_episode_is_a_contract_error():
    spec = make_env_spec("pointmass", horizon=1)
    state, _ = step(spec, reset(spec, 0), np.zeros(2))
    assert state.done
    with pytest.raises(TeachLoopError) as exc:
        step(spec, state, np.zeros(2))
    assert exc.value.code == ErrorCode.CONTRACT_ERROR


def test_action_size_and_finiteness_are_checked():
    spec = make_env_spec("pointmass")
    state = reset(spec, 0)
    with pytest.raises(TeachLoopError) as exc:
        step(spec, state, np.zeros(3))
    assert exc.value.code == ErrorCode.DIMENSION_ERROR
    with pytest.raises(TeachLoopError) as exc:
        step(spec, state, np.array([np.nan, 0.0]))
    assert exc.value.code == ErrorCode.NUMERIC_ERROR


def test_out_of_range_actions_are_clamped():
    spec = make_env_spec("pendulum")
    state = EnvState(s=np.array([0.5, 0.0]))
    clipped, reward_big = step(spec, state, np.array([5.0]))
    unit, reward_unit = step(spec, state, np.array([1.0]))
    assert np.array_equal(clipped.s, unit.s)
    assert reward_big == reward_unit


def test_cartpole_terminates_on_failure():
    spec = make_env_spec("cartpole_continuous")
    state = EnvState(s=np.array([0.0, 0.0, 0.25, 0.0]))
    next_state, reward = step(spec, state, np.array([0.0]))
    assert reward == 1.0
    assert next_state.terminated and next_state.done


def test_observation_noise_stays_inside_the_box():
    rng = np.random.default_rng(0)
    states = rng.normal(scale=3.0, size=(250_000, 4))
    obs = observe(states, 0.4, rng)
    assert np.all(np.abs(obs - states) <= 0.4 * np.abs(states) * (1.0 + 1e-12))
    assert within_noise_box(states[0], obs[0], 0.4)


def test_zero_alpha_returns_the_state_bit_exactly():
    rng = np.random.default_rng(1)
    s = rng.normal(size=6)
    o = observe(s, NoiseModel(alpha=0.0), rng)
    assert np.array_equal(o, s)
    assert o is not s


def test_noise_stream_does_not_depend_on_alpha():
    s = np.array([1.0, -2.0, 0.5])
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    observe(s, 0.0, rng_a)
    observe(s, 0.3, rng_b)
    assert rng_a.uniform() == rng_b.uniform()


def test_zero_state_coordinates_are_never_perturbed():
    rng = np.random.default_rng(2)
    o = observe(np.array([0.0, 1.0]), 0.4, rng)
    assert o[0] == 0.0


def test_negative_alpha_is_rejected():
    with pytest.raises(TeachLoopError):
        NoiseModel(alpha=-0.1)


def test_linear_curriculum_ramps_then_holds():
    sched = CurriculumSchedule(alpha_target=0.4, ramp_steps=100, shape="linear")
    assert curriculum_alpha(sched, 0) == 0.0
    assert curriculum_alpha(sched, 50) == pytest.approx(0.2)
    assert curriculum_alpha(sched, 100) == 0.4
    assert curriculum_alpha(sched, 10_000) == 0.4
    values = [curriculum_alpha(sched, k) for k in range(150)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_constant_curriculum_and_zero_ramp_hold_target():
    assert curriculum_alpha(CurriculumSchedule(0.3, 100, "constant"), 0) == 0.3
    assert curriculum_alpha(CurriculumSchedule(0.3, 0, "linear"), 0) == 0.3


def test_negative_curriculum_step_is_a_contract_error():
    with pytest.raises(TeachLoopError) as exc:
        curriculum_alpha(CurriculumSchedule(0.3, 10), -1)
    assert exc.value.code == ErrorCode.CONTRACT_ERROR


def test_scripted_oracle_swings_up_and_balances():
    spec = make_env_spec("pendulum")
    balanced = 0
    for seed in range(20):
        state = reset(spec, seed)
        while not state.done:
            state, _ = step(spec, state, scripted_oracle(spec, state))
        balanced += int(abs(state.s[0]) < 0.1)
    assert balanced >= 19


def test_scripted_oracle_drives_pointmass_home():
    spec = make_env_spec("pointmass")
    state = reset(spec, 4)
    while not state.done:
        state, _ = step(spec, state, scripted_oracle(spec, state))
    assert np.linalg.norm(state.s[:2]) < 0.05


def test_scripted_oracle_has_no_cartpole_controller():
    spec = make_env_spec("cartpole_continuous")
    with pytest.raises(TeachLoopError) as exc:
        scripted_oracle(spec, reset(spec, 0))
    assert exc.value.code == ErrorCode.INVALID_INPUT


def test_observation_is_reproducible_and_boxed():
    s = np.array([1.0, -2.0])
    first = observe(s, 0.4, np.random.default_rng(21))
    second = observe(s, 0.4, np.random.default_rng(21))
    assert np.array_equal(first, second)
    assert 0.6 <= first[0] <= 1.4
    assert -2.8 <= first[1] <= -1.2
