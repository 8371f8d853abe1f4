"""Generator determinism, trainer behavior, gradient check, bundle export."""

import dataclasses

import numpy as np
import pytest

from nero_ood import (
    ScenarioSpec,
    export_bundles,
    generate,
    train_toy,
    validate_consistency,
)
from nero_ood.errors import DivergedLoss, ParseError, UsageError
from nero_ood.synthetic import (
    CLASS_SEPARATION,
    load_dataset,
    spec_from_dict,
    toy_loss,
    toy_loss_and_grads,
    write_dataset,
)


def datasets_identical(a, b) -> bool:
    return (
        a.train_inputs.tobytes() == b.train_inputs.tobytes()
        and a.train_labels.tobytes() == b.train_labels.tobytes()
        and a.test_inputs.tobytes() == b.test_inputs.tobytes()
        and a.test_labels.tobytes() == b.test_labels.tobytes()
        and a.ood_inputs.tobytes() == b.ood_inputs.tobytes()
        and a.id_means.tobytes() == b.id_means.tobytes()
        and a.ood_means.tobytes() == b.ood_means.tobytes()
    )


class TestGenerate:
    def test_same_seed_bit_identical(self):
        spec = ScenarioSpec(seed=99)
        assert datasets_identical(generate(spec), generate(spec))

    def test_different_seeds_differ(self):
        assert not datasets_identical(
            generate(ScenarioSpec(seed=1)), generate(ScenarioSpec(seed=2))
        )

    def test_label_histogram(self):
        spec = ScenarioSpec(samples_per_class=200)
        ds = generate(spec)
        labels = np.concatenate([ds.train_labels, ds.test_labels])
        counts = np.bincount(labels, minlength=spec.n_classes)
        assert counts.tolist() == [200, 200, 200]

    def test_default_split_sizes(self, default_dataset):
        assert default_dataset.train_inputs.shape == (600, 20)
        assert default_dataset.test_inputs.shape == (300, 20)
        assert default_dataset.ood_inputs.shape == (300, 20)

    def test_ood_means_displaced_beyond_shell(self, default_dataset):
        spec = default_dataset.spec
        for ood_mean in default_dataset.ood_means:
            distances = np.linalg.norm(default_dataset.id_means - ood_mean, axis=1)
            assert distances.min() >= spec.ood_displacement
            np.testing.assert_allclose(
                np.linalg.norm(ood_mean), CLASS_SEPARATION + spec.ood_displacement, rtol=1e-12
            )

    def test_between_layout_sits_on_the_shell(self):
        ds = generate(ScenarioSpec(layout="between"))
        for ood_mean in ds.ood_means:
            np.testing.assert_allclose(np.linalg.norm(ood_mean), CLASS_SEPARATION, rtol=1e-12)

    def test_spec_validation(self):
        with pytest.raises(UsageError):
            ScenarioSpec(n_classes=1).validate()
        with pytest.raises(UsageError):
            ScenarioSpec(train_fraction=1.0).validate()
        with pytest.raises(UsageError):
            ScenarioSpec(ood_displacement=0.0).validate()
        with pytest.raises(UsageError):
            ScenarioSpec(layout="weird").validate()
        with pytest.raises(UsageError):
            spec_from_dict({"unknown_field": 3})


class TestTrainToy:
    def test_default_recipe_reaches_accuracy(self, default_train_result):
        # 300 epochs at lr 0.05 on the default scenario
        assert default_train_result.train_accuracy >= 0.95

    def test_loss_decreases(self, default_train_result):
        losses = default_train_result.losses
        assert losses[-1] < losses[0]
        assert len(losses) == 301  # one per epoch plus the post-training value

    def test_same_seeds_identical_model(self, default_dataset):
        a = train_toy(default_dataset, epochs=20, learning_rate=0.05, seed=3)
        b = train_toy(default_dataset, epochs=20, learning_rate=0.05, seed=3)
        assert a.model.w1.tobytes() == b.model.w1.tobytes()
        assert a.model.b1.tobytes() == b.model.b1.tobytes()
        assert a.model.w2.tobytes() == b.model.w2.tobytes()
        assert a.model.b2.tobytes() == b.model.b2.tobytes()
        assert a.losses == b.losses

    def test_huge_learning_rate_diverges(self, default_dataset):
        with pytest.raises(DivergedLoss):
            train_toy(default_dataset, epochs=100, learning_rate=1e6)

    def test_argument_validation(self, default_dataset):
        with pytest.raises(UsageError):
            train_toy(default_dataset, epochs=0)
        with pytest.raises(UsageError):
            train_toy(default_dataset, learning_rate=-0.1)


class TestGradients:
    def test_analytic_matches_central_differences(self, default_dataset):
        result = train_toy(default_dataset, epochs=5, learning_rate=0.05)
        model = result.model
        inputs = default_dataset.train_inputs[:64]
        labels = default_dataset.train_labels[:64]
        _, grads = toy_loss_and_grads(model, inputs, labels)

        h = 1e-6
        spots = [("w1", (3, 7)), ("w1", (0, 0)), ("b1", (5,)), ("w2", (10, 1)), ("b2", (2,))]
        for name, index in spots:
            param = getattr(model, name)
            original = param[index]
            param[index] = original + h
            loss_plus = toy_loss(model, inputs, labels)
            param[index] = original - h
            loss_minus = toy_loss(model, inputs, labels)
            param[index] = original
            numeric = (loss_plus - loss_minus) / (2 * h)
            analytic = grads[name][index]
            assert abs(numeric - analytic) <= 1e-5 * max(1.0, abs(analytic))


class TestExportBundles:
    def test_consistency_below_1e9(self, default_train_result, default_dataset):
        bundles = export_bundles(default_train_result.model, default_dataset)
        for b in bundles:
            report = validate_consistency(b, tol=1e-9)
            assert report.consistent

    def test_split_schema(self, default_bundles):
        train, test_id, test_ood = default_bundles
        assert train.split_tag == "train"
        assert not np.any(train.labels == -1)
        assert np.all(test_ood.labels == -1)
        assert test_id.split_tag == "test_id"

    def test_dimensions_match_spec(self, default_bundles, default_dataset):
        spec = default_dataset.spec
        for b in default_bundles:
            assert b.d == spec.hidden_dim
            assert b.n_classes == spec.n_classes

    def test_features_are_relu_activations(self, default_bundles):
        for b in default_bundles:
            assert np.all(b.features >= 0)


class TestDatasetFiles:
    def test_round_trip_bit_exact(self, default_dataset, tmp_path):
        write_dataset(default_dataset, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert datasets_identical(loaded, default_dataset)
        assert loaded.spec == default_dataset.spec

    def test_rejects_foreign_manifest(self, tmp_path):
        (tmp_path / "ds").mkdir()
        (tmp_path / "ds" / "manifest.json").write_text('{"format": "other"}')
        with pytest.raises(ParseError):
            load_dataset(tmp_path / "ds")


class TestFullPipelineDirection:
    def test_detector_beats_chance_by_wide_margin(self, fitted_model, default_bundles):
        from nero_ood import auroc, score_batch

        id_scores, _ = score_batch(fitted_model, default_bundles[1])
        ood_scores, _ = score_batch(fitted_model, default_bundles[2])
        assert auroc(id_scores, ood_scores) >= 0.9
