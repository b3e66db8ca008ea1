from dataclasses import replace

import numpy as np
import pytest

from teachloop.envs import make_env_spec
from teachloop.errors import ErrorCode, TeachLoopError
from teachloop.irl import EnvRewardSource, LearnedRewardSource, make_reward_model
from teachloop.numcore import load_checkpoint
from teachloop.orchestrator import (
    ExperimentConfig,
    OraclePolicy,
    RandomPolicy,
    ablation_verdict,
    collect_oracle_demonstrations,
    evaluate,
    oracle_gap_fraction,
    spread_verdict,
    train_l2t_irl,
    train_l2t_rl,
    train_two_stage_bc,
    variant_verdict,
)


def _tiny(**overrides) -> ExperimentConfig:
    params = dict(
        env="pendulum",
        horizon=20,
        total_steps=30,
        warmup_steps=10,
        batch_size=8,
        buffer_capacity=1000,
        eval_interval=15,
        eval_episodes=2,
        hidden=(8,),
        seed=3,
    )
    params.update(overrides)
    return ExperimentConfig(**params)


def test_single_loop_is_deterministic_per_seed():
    first = train_l2t_rl(_tiny())
    second = train_l2t_rl(_tiny())
    assert first.metrics.lines() == second.metrics.lines()
    assert first.metrics.lines() != train_l2t_rl(_tiny(seed=4)).metrics.lines()


def test_single_loop_charges_every_step_to_the_teacher(tmp_path):
    result = train_l2t_rl(_tiny(), output_dir=tmp_path)

    assert result.counters.teacher_env_steps == 30
    assert result.counters.student_env_steps == 0
    assert len(result.metrics.of_kind("loss")) == 20
    assert [record.step for record in result.evals] == [15, 30]
    assert result.best_teacher is not None
    assert result.best_teacher_return == max(record.teacher_return_mean for record in result.evals)
    lines = (tmp_path / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert lines == result.metrics.lines()


def test_zero_steps_trains_nothing():
    result = train_l2t_rl(_tiny(total_steps=0, warmup_steps=0))
    assert len(result.metrics) == 0
    assert result.evals == []
    assert result.counters.as_dict() == {"teacher_env_steps": 0, "student_env_steps": 0}
    assert result.student.updates == 0


def test_loss_log_interval_thins_loss_records():
    result = train_l2t_rl(_tiny(loss_log_interval=5))
    assert [record["step"] for record in result.metrics.of_kind("loss")] == [11, 16, 21, 26]


def test_fixed_environment_reward_matches_the_plain_loop():
    cfg = _tiny()
    demos, _ = collect_oracle_demonstrations(cfg.env_spec, 1, seed=9)
    plain = train_l2t_rl(cfg)
    fixed = train_l2t_irl(replace(cfg, algorithm="l2t_irl"), demos, fixed_reward=EnvRewardSource())
    assert plain.metrics.lines() == fixed.metrics.lines()


def test_learned_rewards_log_both_objectives():
    cfg = _tiny(algorithm="l2t_irl")
    demos, _ = collect_oracle_demonstrations(cfg.env_spec, 2, seed=1)
    result = train_l2t_irl(cfg, demos)

    assert len(result.metrics.of_kind("reward")) == 20
    assert result.teacher_reward.updates == 20
    assert result.student_reward.updates == 20
    assert result.counters.student_env_steps == 0


def test_updating_reward_cannot_pose_as_fixed():
    cfg = _tiny(algorithm="l2t_irl")
    demos, _ = collect_oracle_demonstrations(cfg.env_spec, 1, seed=1)
    model = make_reward_model(2, 1, np.random.default_rng(0), hidden=(4,))
    with pytest.raises(TeachLoopError) as exc:
        train_l2t_irl(cfg, demos, fixed_reward=LearnedRewardSource(model))
    assert exc.value.code == ErrorCode.CONTRACT_ERROR


def test_trainers_check_the_algorithm():
    with pytest.raises(TeachLoopError) as exc:
        train_l2t_rl(_tiny(algorithm="l2t_irl"))
    assert exc.value.code == ErrorCode.CONFIG_ERROR


def test_imitation_reward_source_trains_without_env_rewards():
    result = train_l2t_rl(_tiny(reward_source="imitation", demo_episodes=1))
    assert result.counters.teacher_env_steps == 30


def test_two_stage_baseline_charges_the_student(tmp_path):
    teacher = train_l2t_rl(_tiny()).teacher
    cfg = _tiny(algorithm="two_stage_bc", baseline_steps=12, eval_interval=6)
    result = train_two_stage_bc(cfg, teacher, output_dir=tmp_path)

    assert result.counters.teacher_env_steps == 0
    assert result.counters.student_env_steps == 12
    assert result.student.loss_mode == "bc_l1"
    assert [record["step"] for record in result.metrics.of_kind("baseline")] == [6, 12]
    assert (tmp_path / "metrics.jsonl").exists()


def test_numeric_failure_writes_a_diagnostic_checkpoint(tmp_path, monkeypatch):
    import teachloop.orchestrator as orchestrator

    def explode(agent, batch):
        raise TeachLoopError(ErrorCode.NUMERIC_ERROR, "Critic TD loss became non-finite (nan).")

    monkeypatch.setattr(orchestrator, "critic_td_update", explode)
    with pytest.raises(TeachLoopError) as exc:
        train_l2t_rl(_tiny(), output_dir=tmp_path)
    assert exc.value.code == ErrorCode.NUMERIC_ERROR
    assert (tmp_path / "nan-abort.ckpt").exists()


def test_evaluation_ignores_worker_count():
    spec = make_env_spec("pendulum", horizon=30)
    serial = evaluate(RandomPolicy(spec), spec, 0.0, 6, seed=11)
    threaded = evaluate(RandomPolicy(spec), spec, 0.0, 6, seed=11, workers=3)
    assert serial == threaded
    assert len(serial.returns) == 6
    assert serial.length_mean == 30.0


def test_oracle_outperforms_random_actions():
    spec = make_env_spec("pendulum")
    oracle = evaluate(OraclePolicy(spec), spec, 0.0, 5, seed=2)
    random = evaluate(RandomPolicy(spec), spec, 0.0, 5, seed=2)
    assert oracle.return_mean > random.return_mean
    assert 0.0 < oracle_gap_fraction(oracle.return_mean, random.return_mean, oracle.return_mean) == 1.0


def test_evaluation_from_a_fixed_start():
    spec = make_env_spec("pendulum", horizon=10)
    stats = evaluate(OraclePolicy(spec), spec, 0.0, 2, seed=0, start=np.array([0.0, 0.0]))
    assert stats.returns[0] == stats.returns[1]
    assert stats.return_mean == pytest.approx(0.0, abs=1e-12)


def test_oracle_demonstrations_are_episodic():
    spec = make_env_spec("pointmass", horizon=25)
    demos, returns = collect_oracle_demonstrations(spec, 3, seed=5)
    assert len(demos) == 75
    assert demos.episode_starts == [0, 25, 50]
    assert returns.shape == (3,)
    assert np.all(np.abs(demos.actions) <= 1.0)


def test_gap_fraction_needs_a_better_oracle():
    assert oracle_gap_fraction(5.0, 0.0, 10.0) == 0.5
    with pytest.raises(TeachLoopError) as exc:
        oracle_gap_fraction(1.0, 2.0, 2.0)
    assert exc.value.code == ErrorCode.CONTRACT_ERROR


def test_ablation_verdict():
    assert ablation_verdict([(0.3, -150.0), (0.1, -100.0), (0.2, -120.0)])
    assert not ablation_verdict([(0.1, -150.0), (0.2, -100.0)])
    assert ablation_verdict([(0.1, -100.0), (0.2, -99.0), (0.3, -130.0)], tolerance=5.0, max_inversions=1)
    assert not ablation_verdict([(0.1, -100.0), (0.2, -99.0), (0.3, -98.0)], tolerance=5.0, max_inversions=1)
    with pytest.raises(TeachLoopError):
        ablation_verdict([(0.1, -100.0)])


def test_variant_and_spread_verdicts():
    assert variant_verdict([-100.0, -110.0], [-120.0, -130.0])
    assert variant_verdict([-100.0], [-100.0])
    assert not variant_verdict([-100.0], [-100.0], strict=True)
    assert spread_verdict({"bc_l1": -100.0, "bc_l2": -110.0, "kl": -105.0})
    assert not spread_verdict({"bc_l1": -100.0, "kl": -200.0})
    assert spread_verdict({"a": 0.0, "b": 0.0})


def test_config_validation_names_the_key():
    with pytest.raises(TeachLoopError) as exc:
        ExperimentConfig(alpha=-1.0)
    assert exc.value.code == ErrorCode.CONFIG_ERROR
    assert exc.value.message.startswith("noise.alpha:")

    with pytest.raises(TeachLoopError) as exc:
        ExperimentConfig(total_steps=10, warmup_steps=20)
    assert exc.value.message.startswith("train.warmup_steps:")


def test_curriculum_ramp_covers_a_fraction_of_training():
    cfg = ExperimentConfig(total_steps=1000, warmup_steps=0, ramp_fraction=0.25, alpha=0.2)
    schedule = cfg.curriculum_schedule
    assert schedule.ramp_steps == 250
    assert schedule.alpha_target == 0.2


def test_student_is_evaluated_at_the_target_noise_during_the_ramp(monkeypatch):
    import teachloop.orchestrator as orchestrator

    seen = []
    real_evaluate = orchestrator.evaluate

    def recording(agent, spec, alpha, *args, **kwargs):
        seen.append(alpha)
        return real_evaluate(agent, spec, alpha, *args, **kwargs)

    monkeypatch.setattr(orchestrator, "evaluate", recording)
    cfg = _tiny(ramp_fraction=1.0)
    result = train_l2t_rl(cfg)

    assert len(seen) == 2 * len(result.evals)
    assert all(alpha == cfg.alpha for alpha in seen)
    assert result.evals[0].alpha_current < cfg.alpha


def test_teacher_and_student_train_on_the_same_minibatch(monkeypatch):
    import teachloop.orchestrator as orchestrator

    seen = {"critic": [], "actor": [], "student": []}

    def recording(name, func):
        def wrapper(agent, batch, *args, **kwargs):
            seen[name].append(batch.indices.copy())
            return func(agent, batch, *args, **kwargs)

        return wrapper

    monkeypatch.setattr(orchestrator, "critic_td_update", recording("critic", orchestrator.critic_td_update))
    monkeypatch.setattr(orchestrator, "actor_pmd_update", recording("actor", orchestrator.actor_pmd_update))
    real_student_update = orchestrator.student_update

    def student_recording(student, teacher, batch):
        seen["student"].append(batch.indices.copy())
        return real_student_update(student, teacher, batch)

    monkeypatch.setattr(orchestrator, "student_update", student_recording)
    train_l2t_rl(_tiny())

    assert len(seen["critic"]) == 20
    for critic, actor, student in zip(seen["critic"], seen["actor"], seen["student"]):
        assert critic.size > 0
        assert np.array_equal(critic, actor)
        assert np.array_equal(critic, student)


def test_two_stage_baseline_copies_a_supplied_student():
    first = train_l2t_rl(_tiny(loss_mode="combined"))
    cfg = _tiny(algorithm="two_stage_bc", baseline_steps=6, eval_interval=6)
    result = train_two_stage_bc(cfg, first.teacher, student=first.student)

    assert first.student.loss_mode == "combined"
    assert result.student is not first.student
    assert result.student.loss_mode == "bc_l1"


def test_reward_failure_checkpoint_includes_reward_models(tmp_path, monkeypatch):
    import teachloop.orchestrator as orchestrator

    def explode(*args, **kwargs):
        raise TeachLoopError(ErrorCode.NUMERIC_ERROR, "Teacher reward objective became non-finite (nan).")

    monkeypatch.setattr(orchestrator, "teacher_reward_update", explode)
    cfg = _tiny(algorithm="l2t_irl")
    demos, _ = collect_oracle_demonstrations(cfg.env_spec, 1, seed=4)
    with pytest.raises(TeachLoopError) as exc:
        train_l2t_irl(cfg, demos, output_dir=tmp_path)
    assert exc.value.code == ErrorCode.NUMERIC_ERROR

    tensors, meta = load_checkpoint(tmp_path / "nan-abort.ckpt")
    assert meta["step"] == cfg.warmup_steps
    assert any(name.startswith("teacher_reward.") for name in tensors)
    assert any(name.startswith("student_reward.") for name in tensors)
    assert any(name.startswith("student.") for name in tensors)
