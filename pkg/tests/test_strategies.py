"""Strategy tests: hand-computed targets and losses, reductions to plain
cross-entropy, and logit gradients against central finite differences."""

import numpy as np
import pytest

from helpers import max_rel_error, numeric_grads
from d2l.errors import (
    ConfigError,
    EmptyHistory,
    InvalidRate,
    ShapeMismatch,
    SingularMatrix,
)
from d2l.network import backprop_logits, forward, init_model, loss_and_grad
from d2l.strategies import (
    BOOT_HARD_BETA,
    BOOT_SOFT_BETA,
    StrategyKind,
    alpha_update,
    backward_logit_grad,
    backward_loss,
    bootstrap_targets,
    d2l_targets,
    forward_logit_grad,
    forward_loss,
    invert_transition,
    one_hot,
    symmetric_transition,
)


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def random_probs(rng, batch, classes):
    return softmax(rng.standard_normal((batch, classes)) * 2.0)


class TestStrategyKind:
    def test_parses_cli_names(self):
        assert StrategyKind.parse("ce") is StrategyKind.CROSS_ENTROPY
        assert StrategyKind.parse("d2l") is StrategyKind.D2L
        assert StrategyKind.parse("boot-soft") is StrategyKind.BOOT_SOFT
        assert StrategyKind.parse("boot-hard") is StrategyKind.BOOT_HARD
        assert StrategyKind.parse("forward") is StrategyKind.FORWARD
        assert StrategyKind.parse("backward") is StrategyKind.BACKWARD

    def test_rejects_unknown(self):
        with pytest.raises(ConfigError):
            StrategyKind.parse("bootstrap")

    def test_default_betas(self):
        assert BOOT_HARD_BETA == 0.8
        assert BOOT_SOFT_BETA == 0.95


class TestAlphaUpdate:
    def test_before_turning_point_is_one(self):
        assert alpha_update([9.0, 5.0, 3.0], epoch=2, total_epochs=10, turning_epoch=-1) == 1.0

    def test_epoch_zero_is_one(self):
        assert alpha_update([4.0], epoch=0, total_epochs=10, turning_epoch=0) == 1.0

    def test_ratio_one_gives_exp_of_minus_progress(self):
        # epoch/total = 0.5 and the current score equals the running min
        lids = [3.0, 2.0, 2.5, 4.0, 5.0, 2.0]
        value = alpha_update(lids, epoch=5, total_epochs=10, turning_epoch=2)
        np.testing.assert_allclose(value, np.exp(-0.5), rtol=1e-12)

    def test_ratio_two_gives_exp_of_minus_one(self):
        lids = [3.0, 2.0, 2.5, 4.0, 5.0, 4.0]
        value = alpha_update(lids, epoch=5, total_epochs=10, turning_epoch=2)
        np.testing.assert_allclose(value, np.exp(-1.0), rtol=1e-12)

    def test_requires_history_through_epoch(self):
        with pytest.raises(EmptyHistory):
            alpha_update([3.0, 2.0], epoch=2, total_epochs=10, turning_epoch=1)

    def test_strictly_decreasing_in_current_score(self):
        history = [3.0, 2.0, 2.5]
        values = [
            alpha_update(history + [lid], epoch=3, total_epochs=10, turning_epoch=1)
            for lid in (2.0, 3.0, 5.0, 9.0, 20.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0.0 < v <= 1.0 for v in values)

    def test_stays_in_unit_interval_on_random_sweeps(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            epoch = int(rng.integers(1, 40))
            lids = rng.uniform(0.5, 30.0, size=epoch + 1)
            value = alpha_update(lids, epoch, total_epochs=40, turning_epoch=0)
            assert 0.0 < value <= 1.0


class TestTargets:
    def test_one_hot(self):
        np.testing.assert_array_equal(
            one_hot([2, 0], 3), [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
        )
        with pytest.raises(ConfigError):
            one_hot([3], 3)

    def test_d2l_alpha_one_returns_raw_exactly(self):
        rng = np.random.default_rng(1)
        raw = one_hot(rng.integers(0, 4, 16), 4)
        targets = d2l_targets(raw, random_probs(rng, 16, 4), alpha=1.0)
        np.testing.assert_array_equal(targets, raw)

    def test_d2l_alpha_zero_returns_predictions(self):
        rng = np.random.default_rng(2)
        probs = random_probs(rng, 16, 4)
        targets = d2l_targets(one_hot(rng.integers(0, 4, 16), 4), probs, alpha=0.0)
        np.testing.assert_array_equal(targets.argmax(axis=1), probs.argmax(axis=1))
        np.testing.assert_array_equal(np.sort(targets, axis=1)[:, :-1], np.zeros((16, 3)))

    def test_d2l_hand_case(self):
        targets = d2l_targets(one_hot([0], 3), np.array([[0.2, 0.1, 0.7]]), alpha=0.6)
        np.testing.assert_allclose(targets, [[0.6, 0.0, 0.4]], rtol=1e-12, atol=0)

    def test_d2l_argmax_ties_take_lowest_class(self):
        targets = d2l_targets(one_hot([2], 3), np.array([[0.4, 0.4, 0.2]]), alpha=0.5)
        np.testing.assert_allclose(targets, [[0.5, 0.0, 0.5]], rtol=1e-12)

    def test_d2l_rejects_bad_alpha(self):
        with pytest.raises(ConfigError):
            d2l_targets(one_hot([0], 2), np.array([[0.5, 0.5]]), alpha=1.5)

    def test_bootstrap_beta_one_returns_raw(self):
        rng = np.random.default_rng(3)
        raw = one_hot(rng.integers(0, 3, 8), 3)
        for hard in (True, False):
            np.testing.assert_array_equal(
                bootstrap_targets(raw, random_probs(rng, 8, 3), 1.0, hard), raw
            )

    def test_bootstrap_soft_hand_case(self):
        targets = bootstrap_targets(
            np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]), beta=0.95, hard=False
        )
        np.testing.assert_allclose(targets, [[0.975, 0.025]], rtol=1e-12)

    def test_bootstrap_hard_collapses_when_prediction_agrees(self):
        raw = one_hot([1], 3)
        targets = bootstrap_targets(raw, np.array([[0.1, 0.8, 0.1]]), beta=0.8, hard=True)
        np.testing.assert_array_equal(targets, raw)

    def test_all_targets_are_distributions(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            classes = int(rng.integers(2, 7))
            batch = int(rng.integers(1, 12))
            raw = one_hot(rng.integers(0, classes, batch), classes)
            probs = random_probs(rng, batch, classes)
            built = [
                d2l_targets(raw, probs, float(rng.random())),
                bootstrap_targets(raw, probs, float(rng.random()), hard=True),
                bootstrap_targets(raw, probs, float(rng.random()), hard=False),
            ]
            for targets in built:
                assert targets.min() >= 0.0
                np.testing.assert_allclose(targets.sum(axis=1), 1.0, atol=1e-9)


class TestTransition:
    def test_zero_rate_is_identity(self):
        np.testing.assert_array_equal(symmetric_transition(4, 0.0), np.eye(4))

    def test_ten_class_hand_values(self):
        t = symmetric_transition(10, 0.4)
        np.testing.assert_allclose(np.diag(t), np.full(10, 0.6), rtol=1e-15)
        off = t[~np.eye(10, dtype=bool)]
        np.testing.assert_allclose(off, np.full(90, 0.4 / 9), rtol=1e-15)

    def test_rows_are_stochastic(self):
        for c, eta in ((2, 0.2), (5, 0.45), (10, 0.6)):
            t = symmetric_transition(c, eta)
            assert t.min() >= 0.0
            np.testing.assert_allclose(t.sum(axis=1), np.ones(c), atol=1e-12)

    def test_rejects_bad_rate(self):
        with pytest.raises(InvalidRate):
            symmetric_transition(3, 1.0)
        with pytest.raises(InvalidRate):
            symmetric_transition(3, -0.1)

    def test_inverse_and_singular(self):
        t = symmetric_transition(4, 0.3)
        np.testing.assert_allclose(invert_transition(t) @ t, np.eye(4), atol=1e-12)
        # rate 0.5 on two classes makes every row (0.5, 0.5)
        with pytest.raises(SingularMatrix):
            invert_transition(symmetric_transition(2, 0.5))
        with pytest.raises(ShapeMismatch):
            invert_transition(np.zeros((2, 3)))


class TestMatrixLosses:
    def test_forward_reduces_to_cross_entropy_at_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            probs = random_probs(rng, 16, 5)
            raw = one_hot(rng.integers(0, 5, 16), 5)
            plain = -np.mean(np.log(probs[np.arange(16), raw.argmax(axis=1)]))
            np.testing.assert_allclose(
                forward_loss(probs, raw, np.eye(5)), plain, rtol=1e-12
            )

    def test_backward_reduces_to_cross_entropy_at_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            probs = random_probs(rng, 16, 5)
            raw = one_hot(rng.integers(0, 5, 16), 5)
            plain = -np.mean(np.log(probs[np.arange(16), raw.argmax(axis=1)]))
            np.testing.assert_allclose(
                backward_loss(probs, raw, np.eye(5)), plain, rtol=1e-12
            )

    def test_forward_uniform_predictions_cost_log_classes(self):
        probs = np.full((4, 6), 1.0 / 6)
        raw = one_hot([0, 3, 5, 2], 6)
        value = forward_loss(probs, raw, symmetric_transition(6, 0.35))
        np.testing.assert_allclose(value, np.log(6.0), rtol=1e-12)

    def test_forward_two_class_hand_value(self):
        value = forward_loss(
            np.array([[0.9, 0.1]]), one_hot([0], 2), symmetric_transition(2, 0.2)
        )
        np.testing.assert_allclose(value, -np.log(0.74), rtol=1e-9)

    def test_backward_two_class_hand_value(self):
        value = backward_loss(
            np.array([[0.9, 0.1]]), one_hot([0], 2), symmetric_transition(2, 0.2)
        )
        expected = (0.8 * -np.log(0.9) - 0.2 * -np.log(0.1)) / 0.6
        np.testing.assert_allclose(value, expected, rtol=1e-9)
        assert value < 0.0

    def test_backward_never_clamps_negative_values(self):
        probs = np.array([[0.99, 0.005, 0.005]])
        value = backward_loss(probs, one_hot([0], 3), symmetric_transition(3, 0.3))
        assert value < 0.0

    def test_backward_singular_transition_raises(self):
        with pytest.raises(SingularMatrix):
            backward_loss(
                np.array([[0.5, 0.5]]), one_hot([0], 2), np.full((2, 2), 0.5)
            )


class TestMatrixLossGradients:
    def numeric_logit_grad(self, logits, loss_of_probs, h=1e-6):
        grad = np.zeros_like(logits)
        flat, gflat = logits.ravel(), grad.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = loss_of_probs(softmax(logits))
            flat[idx] = orig - h
            f_minus = loss_of_probs(softmax(logits))
            flat[idx] = orig
            gflat[idx] = (f_plus - f_minus) / (2.0 * h)
        return grad

    def test_gradients_match_finite_differences_at_logits(self):
        rng = np.random.default_rng(7)
        for case in range(8):
            classes = int(rng.integers(2, 6))
            batch = int(rng.integers(2, 9))
            logits = rng.standard_normal((batch, classes)) * 2.0
            raw = one_hot(rng.integers(0, classes, batch), classes)
            t = symmetric_transition(classes, float(rng.uniform(0.1, 0.4)))
            for loss_fn, grad_fn in (
                (forward_loss, forward_logit_grad),
                (backward_loss, backward_logit_grad),
            ):
                analytic = grad_fn(softmax(logits), raw, t)
                numeric = self.numeric_logit_grad(
                    logits, lambda p: loss_fn(p, raw, t)
                )
                scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
                assert np.max(np.abs(analytic - numeric) / scale) < 1e-5

    def test_identity_transition_gradient_equals_cross_entropy(self):
        rng = np.random.default_rng(8)
        probs = random_probs(rng, 12, 4)
        raw = one_hot(rng.integers(0, 4, 12), 4)
        plain = (probs - raw) / 12
        np.testing.assert_allclose(
            forward_logit_grad(probs, raw, np.eye(4)), plain, rtol=1e-9, atol=1e-15
        )
        np.testing.assert_allclose(
            backward_logit_grad(probs, raw, np.eye(4)), plain, rtol=1e-9, atol=1e-15
        )

    def test_full_model_gradients_match_finite_differences(self):
        # same chain the trainer uses: forward pass, strategy gradient at
        # the logits, shared backprop through the layers
        rng = np.random.default_rng(9)
        model = init_model([4, 10, 3], seed=21)
        batch = rng.standard_normal((6, 4))
        raw = one_hot(rng.integers(0, 3, 6), 3)
        t = symmetric_transition(3, 0.25)
        for loss_fn, grad_fn in (
            (forward_loss, forward_logit_grad),
            (backward_loss, backward_logit_grad),
        ):
            def objective():
                return loss_fn(forward(model, batch)[1], raw, t)

            analytic = backprop_logits(
                model, batch, grad_fn(forward(model, batch)[1], raw, t)
            )
            assert max_rel_error(analytic, numeric_grads(model, objective)) < 1e-5

    def test_identity_transition_full_gradients_match_plain_loss(self):
        rng = np.random.default_rng(10)
        model = init_model([5, 8, 4], seed=3)
        batch = rng.standard_normal((7, 5))
        raw = one_hot(rng.integers(0, 4, 7), 4)
        probs = forward(model, batch)[1]
        via_forward = backprop_logits(model, batch, forward_logit_grad(probs, raw, np.eye(4)))
        plain = loss_and_grad(model, batch, raw)[1]
        for a, b in zip(
            via_forward.weights + via_forward.biases, plain.weights + plain.biases
        ):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-15)
