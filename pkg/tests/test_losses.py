import math

import numpy as np
import pytest

from core.errors import ConfigurationError, EmptyBatchError
import core.gradcheck as gradcheck_module
from core.gradcheck import CHECKS, run_gradcheck
from core.losses import (DISCRIMINATOR_EPS, loss_adv_D, loss_adv_F, loss_cls, loss_reg, neg_mean_log, objective_extractor,
                         objective_prototypes, objective_warmup)
from core.model import PrototypeSet, discriminate

EQUIDISTANT = PrototypeSet([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], 4.0)


def _state(rng, n=6, d=3, m=4):
    protos = PrototypeSet(rng.standard_normal((m, d)), float(rng.uniform(1.0, 4.0)))
    return rng.standard_normal((n, d)), rng.integers(0, m, size=n), protos


class TestClassificationLoss:

    def test_uniform_posterior_gives_log_m(self):
        value = loss_cls(np.zeros((4, 2)), np.array([0, 1, 2, 0]), EQUIDISTANT).value
        assert value == pytest.approx(math.log(3), abs=1e-12)

    def test_zero_weights_annihilate(self, rng):
        f, y, protos = _state(rng)
        value = loss_cls(f, y, protos, np.zeros(len(y)))
        assert value.value == 0.0
        assert np.all(value.grad_features == 0.0) and np.all(value.grad_prototypes == 0.0)

    def test_unit_weights_match_unweighted(self, rng):
        f, y, protos = _state(rng)
        a, b = loss_cls(f, y, protos), loss_cls(f, y, protos, np.ones(len(y)))
        assert a.value == b.value
        np.testing.assert_array_equal(a.grad_features, b.grad_features)

    def test_weighted_mean_is_over_batch_size(self, rng):
        f, y, protos = _state(rng)
        w = np.zeros(len(y))
        w[0] = 1.0
        full = loss_cls(f[:1], y[:1], protos).value
        assert loss_cls(f, y, protos, w).value == pytest.approx(full / len(y))

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            loss_cls(np.zeros((0, 2)), np.zeros(0, dtype=int), EQUIDISTANT)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            loss_cls(np.zeros((1, 2)), np.array([3]), EQUIDISTANT)

    def test_weights_outside_unit_interval(self):
        with pytest.raises(ValueError):
            loss_cls(np.zeros((1, 2)), np.array([0]), EQUIDISTANT, np.array([1.5]))


class TestCompactnessLoss:

    def test_features_on_prototypes(self):
        protos = PrototypeSet([[0.0, 0.0], [3.0, 4.0]], 1.0)
        assert loss_reg(protos.prototypes.copy(), np.array([0, 1]), protos).value == 0.0

    def test_three_four_five(self):
        protos = PrototypeSet([[3.0, 4.0], [9.0, 9.0]], 1.0)
        assert loss_reg(np.zeros((1, 2)), np.array([0]), protos, np.array([1.0])).value == 25.0


class TestAdversarialLosses:

    def test_uniform_targets_give_zero_discriminator_loss(self):
        assert loss_adv_D(np.zeros((3, 2)), EQUIDISTANT).value == pytest.approx(0.0, abs=1e-6)

    def test_negative_mean_log(self):
        value, _ = neg_mean_log(np.array([math.exp(-1), math.exp(-1)]))
        assert value == pytest.approx(1.0)
        value, _ = neg_mean_log(1.0 - np.array([1.0 - math.exp(-1)] * 3))
        assert value == pytest.approx(1.0)

    def test_clamped_entries_keep_bounded_gradient(self):
        value, grad = neg_mean_log(np.array([0.0, 1.0, 0.5]))
        assert math.isfinite(value)
        assert np.all(np.isfinite(grad)) and np.all(grad != 0.0)
        assert grad[0] == pytest.approx(-1.0 / (3 * DISCRIMINATOR_EPS))
        assert grad[1] == pytest.approx(-1.0 / (3 * (1.0 - DISCRIMINATOR_EPS)))
        assert grad[2] == pytest.approx(-1.0 / 1.5)

    def test_confident_targets_give_small_extractor_loss(self):
        protos = PrototypeSet([[0.0, 0.0], [50.0, 0.0]], 1.0)
        assert loss_adv_F(np.zeros((2, 2)), protos).value < 1e-6

    def test_uniform_targets_keep_finite_gradients(self):
        value = loss_adv_F(np.zeros((2, 2)), EQUIDISTANT)
        assert math.isfinite(value.value)
        assert np.all(np.isfinite(value.grad_features)) and np.all(np.isfinite(value.grad_prototypes))

    def test_nearly_uniform_target_still_gets_a_feature_gradient(self):
        # 1 - D is about 3e-8 here, below the clamp
        protos = PrototypeSet([[1.0, 0.0], [-1.0, 0.0]], 10.0)
        target = np.array([[1e-3, 0.0]])
        assert 1.0 - discriminate(target, protos)[0] < DISCRIMINATOR_EPS
        grad = loss_adv_F(target, protos).grad_features
        assert np.all(np.isfinite(grad))
        assert abs(grad[0, 0]) > 0.0

    def test_opposing_feature_gradients(self, rng):
        checked = 0
        while checked < 100:
            protos = PrototypeSet(rng.standard_normal((4, 3)), 2.0)
            target = rng.standard_normal((1, 3))
            d = discriminate(target, protos)[0]
            if not 1e-3 < d < 1.0 - 1e-3:
                continue
            g_d = loss_adv_D(target, protos).grad_features.ravel()
            g_f = loss_adv_F(target, protos).grad_features.ravel()
            assert float(g_d @ g_f) < 0.0
            checked += 1

    def test_empty_target_batch(self):
        with pytest.raises(EmptyBatchError):
            loss_adv_D(np.zeros((0, 2)), EQUIDISTANT)


class TestObjectives:

    def test_no_tradeoffs_reduce_to_classification(self, rng):
        f, y, protos = _state(rng)
        t = rng.standard_normal((4, 3))
        value = objective_prototypes(f, y, t, protos, None, 0.0, 0.0).value
        assert value == pytest.approx(loss_cls(f, y, protos).value)

    def test_extractor_objective_without_adversary_is_warmup(self, rng):
        f, y, protos = _state(rng)
        t = rng.standard_normal((4, 3))
        warm = objective_warmup(f, y, protos, 0.5)
        ext = objective_extractor(f, y, t, protos, np.ones(len(y)), 0.5, 0.0)
        assert ext.value == pytest.approx(warm.value)
        np.testing.assert_allclose(ext.grad_features, warm.grad_features)
        assert ext.grad_target_features is None

    def test_both_objectives_share_supervised_terms(self, rng):
        f, y, protos = _state(rng)
        w = rng.uniform(0.0, 1.0, size=len(y))
        a = objective_prototypes(f, y, None, protos, w, 0.7, 0.0).value
        b = objective_extractor(f, y, None, protos, w, 0.7, 0.0).value
        assert a == pytest.approx(b)

    def test_adversarial_terms_enter_with_lambda2(self, rng):
        f, y, protos = _state(rng)
        t = rng.standard_normal((4, 3))
        base = objective_prototypes(f, y, None, protos, None, 0.5, 0.0).value
        with_adv = objective_prototypes(f, y, t, protos, None, 0.5, 2.0).value
        assert with_adv == pytest.approx(base + 2.0 * loss_adv_D(t, protos).value)

    def test_source_free_batch_has_zero_supervised_gradient(self, rng):
        _, _, protos = _state(rng)
        t = rng.standard_normal((4, 3))
        value = objective_prototypes(None, None, t, protos, None, 0.5, 1.0)
        np.testing.assert_allclose(value.grad_prototypes, loss_adv_D(t, protos).grad_prototypes)

    def test_negative_tradeoff_rejected(self, rng):
        f, y, protos = _state(rng)
        with pytest.raises(ConfigurationError):
            objective_prototypes(f, y, None, protos, None, -1.0, 0.0)


class TestGradientOracle:

    @pytest.mark.parametrize('check', sorted(CHECKS))
    def test_each_gradient_matches_finite_differences(self, check):
        suite = run_gradcheck(states=5, seed=11, checks=[check])
        assert suite.passed, suite.to_dict()

    def test_every_drawn_state_is_checked(self, monkeypatch):
        calls = []
        original = gradcheck_module.draw_state

        def counting(rng):
            calls.append(1)
            return original(rng)

        monkeypatch.setattr(gradcheck_module, 'draw_state', counting)
        suite = run_gradcheck(states=7, seed=2, checks=['loss_cls', 'loss_adv_F'])
        assert len(calls) == 14
        assert all(r.states == 7 for r in suite.results)

    def test_unknown_check_rejected(self):
        with pytest.raises(ConfigurationError):
            run_gradcheck(states=1, checks=['loss_nope'])

    def test_suite_reports_every_parameter(self):
        suite = run_gradcheck(states=1, checks=['extractor_backward'])
        names = [r.name for r in suite.results]
        assert names == ['extractor_backward.0.weight', 'extractor_backward.0.bias',
                         'extractor_backward.1.weight', 'extractor_backward.1.bias']

    @pytest.mark.slow
    def test_full_suite_at_one_hundred_states(self):
        suite = run_gradcheck(states=100, h=1e-4, tol=1e-4)
        assert suite.passed, suite.failures
