import numpy as np
import pytest

from fedunlearn import (Dataset, ModelSpec, ModelState, ShadowModel, TriggerSpec, asr,
                        generate_synthetic, init_params, misr, shadow_predict,
                        train_shadow)
# alias: pytest must not collect the library function itself as a test
from fedunlearn import test_accuracy as accuracy_of
from fedunlearn.errors import ParameterError, StateError
from fedunlearn.rng import rng_stream


def constant_class_model(dim, num_classes, winner):
    spec = ModelSpec("logistic", dim, num_classes)
    params = np.zeros(spec.param_count)
    params[dim * num_classes + winner] = 50.0  # bias of the winning class
    return ModelState(spec, params)


class TestTestAccuracy:
    def test_constant_predictor_on_matching_labels(self):
        model = constant_class_model(4, 3, winner=2)
        data = Dataset(np.random.default_rng(0).uniform(size=(20, 4)),
                       np.full(20, 2, dtype=np.int64), 3)
        assert accuracy_of(model, data) == 1.0

    def test_constant_predictor_on_balanced_labels(self):
        rng = rng_stream(0, "acc-balanced")
        model = constant_class_model(4, 10, winner=0)
        data = Dataset(rng.uniform(size=(1000, 4)),
                       rng.integers(0, 10, size=1000), 10)
        assert abs(accuracy_of(model, data) - 0.1) <= 0.03

    def test_empty_set_rejected(self):
        model = constant_class_model(4, 3, winner=0)
        with pytest.raises(ParameterError):
            accuracy_of(model, Dataset(np.zeros((0, 4)), np.zeros(0, dtype=np.int64), 3))

    def test_argmax_tie_breaks_to_lowest_class(self):
        spec = ModelSpec("logistic", 2, 3)
        model = ModelState(spec, np.zeros(spec.param_count))  # all logits equal
        data = Dataset(np.ones((5, 2)), np.zeros(5, dtype=np.int64), 3)
        assert accuracy_of(model, data) == 1.0


def _shadow_setup(shift=0.0, seed=0, n=600, dim=6, classes=3):
    """Member/nonmember sets through one trained-ish model; members shifted."""
    rng = rng_stream(seed, "shadow-setup")
    spec = ModelSpec("logistic", dim, classes)
    model = ModelState(spec, rng.normal(0.0, 1.0, size=spec.param_count))
    member = Dataset(rng.uniform(size=(n, dim)) + shift, rng.integers(0, classes, n), classes)
    nonmember = Dataset(rng.uniform(size=(n, dim)), rng.integers(0, classes, n), classes)
    fresh_member = Dataset(rng.uniform(size=(n, dim)) + shift, rng.integers(0, classes, n), classes)
    fresh_nonmember = Dataset(rng.uniform(size=(n, dim)), rng.integers(0, classes, n), classes)
    return model, member, nonmember, fresh_member, fresh_nonmember


class TestTrainShadow:
    def test_identical_distributions_give_chance_accuracy(self):
        from fedunlearn.models import forward_logits
        model, member, nonmember, fm, fn = _shadow_setup(shift=0.0)
        shadow = train_shadow(model, member, nonmember, seed=1)
        votes_members = shadow_predict(shadow, forward_logits(model, fm.features))
        votes_non = shadow_predict(shadow, forward_logits(model, fn.features))
        holdout_acc = 0.5 * votes_members.mean() + 0.5 * (1.0 - votes_non.mean())
        assert abs(holdout_acc - 0.5) <= 0.05

    def test_large_margin_is_separable(self):
        from fedunlearn.models import forward_logits
        model, member, nonmember, fm, fn = _shadow_setup(shift=4.0)
        shadow = train_shadow(model, member, nonmember, seed=1)
        votes_members = shadow_predict(shadow, forward_logits(model, fm.features))
        votes_non = shadow_predict(shadow, forward_logits(model, fn.features))
        holdout_acc = 0.5 * votes_members.mean() + 0.5 * (1.0 - votes_non.mean())
        assert holdout_acc >= 0.95

    def test_deterministic_per_seed(self):
        model, member, nonmember, _, _ = _shadow_setup()
        a = train_shadow(model, member, nonmember, seed=9)
        b = train_shadow(model, member, nonmember, seed=9)
        assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias

    def test_empty_sets_rejected(self):
        model, member, _, _, _ = _shadow_setup()
        empty = Dataset(np.zeros((0, 6)), np.zeros(0, dtype=np.int64), 3)
        with pytest.raises(ParameterError):
            train_shadow(model, member, empty, seed=0)


class TestMisr:
    def _sets(self, n=40):
        rng = rng_stream(2, "misr-sets")
        target = Dataset(rng.uniform(size=(n, 4)), rng.integers(0, 3, n), 3)
        test = Dataset(rng.uniform(size=(2 * n, 4)), rng.integers(0, 3, 2 * n), 3)
        return constant_class_model(4, 3, winner=0), target, test

    def test_always_member_shadow(self):
        model, target, test = self._sets()
        shadow = ShadowModel(weights=np.zeros(3), bias=50.0, trained=True)
        assert misr(shadow, model, target, test) == 1.0

    def test_always_nonmember_shadow(self):
        model, target, test = self._sets()
        shadow = ShadowModel(weights=np.zeros(3), bias=-50.0, trained=True)
        assert misr(shadow, model, target, test) == 0.0

    def test_untrained_shadow_rejected(self):
        model, target, test = self._sets()
        with pytest.raises(StateError):
            misr(ShadowModel(np.zeros(3), 0.0, trained=False), model, target, test)

    def test_insufficient_test_data_rejected(self):
        model, target, _ = self._sets()
        small = Dataset(np.zeros((3, 4)), np.zeros(3, dtype=np.int64), 3)
        with pytest.raises(ParameterError):
            misr(ShadowModel(np.zeros(3), 1.0, trained=True), model, target, small)

    def test_target_only_variant(self):
        model, target, test = self._sets()
        shadow = ShadowModel(weights=np.zeros(3), bias=50.0, trained=True)
        assert misr(shadow, model, target, test, combined=False) == 1.0

    def test_permutation_invariance(self):
        rng = rng_stream(3, "misr-perm")
        model, target, test = self._sets()
        shadow = ShadowModel(weights=rng.normal(size=3), bias=0.0, trained=True)
        base = misr(shadow, model, target, test)
        order = rng.permutation(len(target))
        shuffled = misr(shadow, model, target.subset(order), test)
        assert base == shuffled


class TestAsr:
    def test_hardwired_target_model(self):
        model = constant_class_model(6, 3, winner=1)
        rng = rng_stream(4, "asr")
        holdout = Dataset(rng.uniform(size=(50, 6)), rng.integers(0, 3, 50), 3)
        trigger = TriggerSpec((0, 1), 1.0, target_label=1, poison_fraction=0.5)
        assert asr(model, holdout, trigger) == 1.0

    def test_noop_trigger_with_never_target_model(self):
        model = constant_class_model(6, 3, winner=0)
        rng = rng_stream(5, "asr2")
        holdout = Dataset(rng.uniform(size=(50, 6)), rng.integers(0, 3, 50), 3)
        trigger = TriggerSpec((), 1.0, target_label=2, poison_fraction=0.5)
        assert asr(model, holdout, trigger) == 0.0

    def test_target_label_samples_excluded(self):
        model = constant_class_model(6, 3, winner=1)
        rng = rng_stream(6, "asr3")
        labels = np.array([1] * 30 + [0] * 10)
        holdout = Dataset(rng.uniform(size=(40, 6)), labels, 3)
        trigger = TriggerSpec((0,), 1.0, target_label=1, poison_fraction=0.5)
        # only the 10 non-target samples count
        assert asr(model, holdout, trigger) == 1.0

    def test_all_samples_target_label_rejected(self):
        model = constant_class_model(6, 3, winner=1)
        holdout = Dataset(np.zeros((5, 6)), np.ones(5, dtype=np.int64), 3)
        trigger = TriggerSpec((0,), 1.0, target_label=1, poison_fraction=0.5)
        with pytest.raises(ParameterError):
            asr(model, holdout, trigger)

    def test_deterministic(self):
        ds = generate_synthetic(3, 6, 50, seed=0)
        model = init_params(ModelSpec("logistic", 6, 3), 1)
        trigger = TriggerSpec((0, 1), 1.0, target_label=0, poison_fraction=0.5)
        assert asr(model, ds, trigger) == asr(model, ds, trigger)
