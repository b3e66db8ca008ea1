"""Autodiff, network, optimizer and checkpoint tests."""

import math

import numpy as np
import pytest

from teachloop.errors import ErrorCode, TeachLoopError
from teachloop.numcore import (
    AdamState,
    DiagGaussianHead,
    Tensor,
    adam_step,
    assign_tensors,
    backward,
    deterministic_action,
    forward,
    init_mlp,
    kl_diag_gaussian,
    load_checkpoint,
    no_grad,
    policy_head,
    sample_squashed,
    save_checkpoint,
    zero_grad,
)
from teachloop.numcore.tensor import log_one_minus_tanh_sq, mean, minimum, pnorm, square, sum_, tanh


def _scalar_loss(net, x):
    out = forward(net, x)
    return mean(square(tanh(out)) + out * 0.5)


def test_gradients_match_central_differences_on_random_networks():
    rng = np.random.default_rng(0)
    eps = 1e-5
    for trial in range(50):
        in_dim = int(rng.integers(1, 5))
        dims = [in_dim, *[int(w) for w in rng.integers(2, 9, size=int(rng.integers(1, 3)))], int(rng.integers(1, 4))]
        net = init_mlp(dims, rng, "tanh")
        x = rng.normal(size=(int(rng.integers(1, 6)), in_dim))

        zero_grad(net.parameters())
        backward(_scalar_loss(net, x))

        for param in net.parameters():
            analytic = param.grad.copy()
            numeric = np.zeros_like(param.data)
            for index in np.ndindex(param.data.shape):
                original = param.data[index]
                param.data[index] = original + eps
                with no_grad():
                    plus = _scalar_loss(net, x).item()
                param.data[index] = original - eps
                with no_grad():
                    minus = _scalar_loss(net, x).item()
                param.data[index] = original
                numeric[index] = (plus - minus) / (2.0 * eps)
            scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
            assert np.all(np.abs(analytic - numeric) / scale <= 1e-4), (trial, param.name)


def test_backward_accumulates_until_zero_grad():
    w = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    backward(sum_(w * 3.0))
    backward(sum_(w * 3.0))
    assert np.allclose(w.grad, [6.0, 6.0])

    zero_grad([w])
    assert w.grad is None


def test_backward_requires_scalar_loss():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(TeachLoopError) as exc:
        backward(w * 2.0)
    assert exc.value.code == ErrorCode.CONTRACT_ERROR


def test_no_grad_builds_constants():
    w = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        out = sum_(w * 2.0)
    assert not out.requires_grad
    backward(out)
    assert w.grad is None


def test_interior_nodes_keep_no_grad():
    w = Tensor(np.array([0.3]), requires_grad=True)
    hidden = tanh(w)
    backward(sum_(square(hidden)))
    assert hidden.grad is None
    assert w.grad is not None


def test_pnorm_subgradient_at_origin_is_zero():
    for p in (1, 2):
        w = Tensor(np.zeros((3, 2)), requires_grad=True)
        backward(mean(pnorm(w, p)))
        assert np.array_equal(w.grad, np.zeros((3, 2)))


def test_minimum_routes_gradient_to_smaller_input():
    a = Tensor(np.array([1.0, 5.0]), requires_grad=True)
    b = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    backward(sum_(minimum(a, b)))
    assert np.array_equal(a.grad, [1.0, 0.0])
    assert np.array_equal(b.grad, [0.0, 1.0])


def test_log_one_minus_tanh_sq_is_stable_for_large_inputs():
    u = Tensor(np.array([0.0, 0.5, 30.0, -30.0]))
    values = log_one_minus_tanh_sq(u).data
    assert values[0] == pytest.approx(0.0, abs=1e-15)
    assert values[1] == pytest.approx(math.log(1.0 - math.tanh(0.5) ** 2), rel=1e-12)
    assert np.all(np.isfinite(values))
    assert values[2] == pytest.approx(2.0 * (math.log(2.0) - 30.0), rel=1e-9)


def test_forward_rejects_wrong_input_size():
    net = init_mlp([3, 4, 2], np.random.default_rng(1))
    with pytest.raises(TeachLoopError) as exc:
        forward(net, np.zeros(2))
    assert exc.value.code == ErrorCode.DIMENSION_ERROR


def test_frozen_forward_leaves_network_gradients_empty():
    net = init_mlp([2, 4, 1], np.random.default_rng(2))
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    backward(sum_(forward(net, x, frozen=True)))
    assert x.grad is not None
    assert all(param.grad is None for param in net.parameters())


def test_sample_squashed_matches_change_of_variables_density():
    head = DiagGaussianHead(np.array([[0.3, -0.2]]), np.array([[-0.5, 0.1]]))
    noise = np.array([[0.7, -1.1]])
    action, log_prob = sample_squashed(head, noise)

    std = np.exp(head.log_std.data)
    pre = head.mean.data + std * noise
    gaussian = -0.5 * noise**2 - np.log(std) - 0.5 * math.log(2.0 * math.pi)
    expected = np.sum(gaussian - np.log(1.0 - np.tanh(pre) ** 2), axis=-1)

    assert np.allclose(action.data, np.tanh(pre))
    assert np.allclose(log_prob.data, expected, rtol=1e-12)


def test_squashed_actions_stay_strictly_inside_bounds():
    head = DiagGaussianHead(np.array([[40.0, -40.0]]), np.array([[0.0, 0.0]]))
    action, log_prob = sample_squashed(head, np.zeros((1, 2)))
    assert np.all(np.abs(action.data) < 1.0)
    assert np.all(np.isfinite(log_prob.data))
    assert np.all(np.abs(deterministic_action(head).data) < 1.0)


def test_policy_head_clamps_log_std():
    net = init_mlp([1, 2], np.random.default_rng(3))
    net.biases[0].data = np.array([0.0, 50.0])
    head = policy_head(net, np.zeros((1, 1)))
    assert head.log_std.data[0, 0] == 2.0


def test_kl_is_zero_for_identical_heads_and_positive_otherwise():
    p = DiagGaussianHead(np.array([[0.1, -0.4]]), np.array([[-1.0, 0.3]]))
    q = DiagGaussianHead(np.array([[0.1, -0.4]]), np.array([[-1.0, 0.3]]))
    assert kl_diag_gaussian(p, q).data[0] == 0.0

    r = DiagGaussianHead(np.array([[0.5, -0.4]]), np.array([[-0.5, 0.3]]))
    assert kl_diag_gaussian(p, r).data[0] > 0.0


def test_adam_requires_gradients():
    w = Tensor(np.ones(2), requires_grad=True, name="w")
    with pytest.raises(TeachLoopError) as exc:
        adam_step([w], AdamState())
    assert exc.value.code == ErrorCode.CONTRACT_ERROR
    assert "w" in exc.value.message


def test_adam_rejects_non_finite_gradients_without_moving():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True, name="w")
    w.grad = np.array([0.5, np.nan])
    state = AdamState(learning_rate=0.1)
    with pytest.raises(TeachLoopError) as exc:
        adam_step([w], state)
    assert exc.value.code == ErrorCode.NUMERIC_ERROR
    assert "w" in exc.value.message
    assert w.data.tolist() == [1.0, -2.0]
    assert state.step_count == 0


def test_adam_first_step_moves_by_learning_rate():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    backward(sum_(w * np.array([3.0, -0.5])))
    state = adam_step([w], AdamState(learning_rate=0.1))
    assert state.step_count == 1
    assert np.allclose(w.data, [0.9, -1.9], atol=1e-7)


def test_adam_minimizes_quadratic():
    w = Tensor(np.array([4.0, -3.0]), requires_grad=True)
    state = AdamState(learning_rate=0.05)
    for _ in range(2000):
        zero_grad([w])
        backward(sum_(square(w - np.array([1.0, 2.0]))))
        adam_step([w], state)
    assert np.allclose(w.data, [1.0, 2.0], atol=1e-2)


def test_checkpoint_round_trip_preserves_bits(tmp_path):
    net = init_mlp([3, 5, 2], np.random.default_rng(4))
    path = save_checkpoint(tmp_path / "net.ckpt", net.named_parameters("policy."), {"step": 7})

    values, metadata = load_checkpoint(path)
    assert metadata == {"step": 7}
    fresh = init_mlp([3, 5, 2], np.random.default_rng(99))
    assign_tensors(fresh.named_parameters("policy."), values)
    for mine, theirs in zip(fresh.parameters(), net.parameters()):
        assert np.array_equal(mine.data, theirs.data)


def test_checkpoint_rejects_truncation_and_shape_mismatch(tmp_path):
    net = init_mlp([2, 3, 1], np.random.default_rng(5))
    path = save_checkpoint(tmp_path / "net.ckpt", net.named_parameters())

    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TeachLoopError) as exc:
        load_checkpoint(truncated)
    assert exc.value.code == ErrorCode.PARSE_ERROR

    values, _ = load_checkpoint(path)
    other = init_mlp([2, 4, 1], np.random.default_rng(6))
    with pytest.raises(TeachLoopError) as exc:
        assign_tensors(other.named_parameters(), values)
    assert exc.value.code == ErrorCode.DIMENSION_ERROR


def test_checkpoint_missing_file_is_invalid_input(tmp_path):
    with pytest.raises(TeachLoopError) as exc:
        load_checkpoint(tmp_path / "absent.ckpt")
    assert exc.value.code == ErrorCode.INVALID_INPUT


def test_kl_matches_a_monte_carlo_estimate():
    p = DiagGaussianHead(np.array([0.3, -0.2]), np.array([-0.5, 0.1]))
    q = DiagGaussianHead(np.array([0.0, 0.4]), np.array([0.0, -0.3]))
    rng = np.random.default_rng(8)

    z = rng.standard_normal((1_000_000, 2))
    std_p, std_q = np.exp(p.log_std.data), np.exp(q.log_std.data)
    x = p.mean.data + std_p * z
    log_ratio = np.sum(np.log(std_q / std_p) - 0.5 * z**2 + 0.5 * ((x - q.mean.data) / std_q) ** 2, axis=-1)

    assert kl_diag_gaussian(p, q).item() == pytest.approx(float(log_ratio.mean()), rel=1e-2)


def test_squashed_density_integrates_to_one():
    n = 800
    edges = np.linspace(-1.0, 1.0, n + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    a0, a1 = np.meshgrid(centers, centers, indexing="ij")
    actions = np.stack([a0.ravel(), a1.ravel()], axis=-1)

    mu = np.array([0.2, -0.3])
    log_std = np.array([-0.7, -0.4])
    head = DiagGaussianHead(np.tile(mu, (len(actions), 1)), np.tile(log_std, (len(actions), 1)))
    noise = (np.arctanh(actions) - mu) / np.exp(log_std)

    squashed, log_prob = sample_squashed(head, noise)
    assert np.allclose(squashed.data, actions, atol=1e-12)
    cell = (2.0 / n) ** 2
    assert float(np.exp(log_prob.data).sum() * cell) == pytest.approx(1.0, abs=2e-3)
