import numpy as np
import pytest

from nero_ood import (
    ArtifactBundle,
    ScenarioSpec,
    export_bundles,
    fit,
    generate,
    train_toy,
    write_bundle,
)


@pytest.fixture(scope="session")
def default_dataset():
    return generate(ScenarioSpec())


@pytest.fixture(scope="session")
def default_train_result(default_dataset):
    return train_toy(default_dataset)


@pytest.fixture(scope="session")
def default_bundles(default_train_result, default_dataset):
    """(train, test_id, test_ood) for the default scenario."""
    return export_bundles(default_train_result.model, default_dataset)


@pytest.fixture(scope="session")
def fitted_model(default_bundles):
    return fit(default_bundles[0])


@pytest.fixture(scope="session")
def bundle_dirs(default_bundles, tmp_path_factory):
    """The default bundles written to disk, as (train, test_id, test_ood) paths."""
    root = tmp_path_factory.mktemp("bundles")
    paths = (root / "train", root / "test_id", root / "test_ood")
    for b, path in zip(default_bundles, paths):
        write_bundle(b, path)
    return paths


def tiny_bundle(split_tag: str = "train") -> ArtifactBundle:
    """4-sample, d=2, C=2 bundle with exactly consistent logits."""
    features = np.array([[1.0, 2.0], [0.5, 0.25], [2.0, 1.0], [0.1, 0.3]])
    weights = np.array([[1.0, -0.5], [0.25, 1.5]])
    bias = np.array([0.125, -0.25])
    logits = features @ weights + bias
    labels = np.array([0, 1, 0, 1], dtype=np.int64)
    if split_tag == "test_ood":
        labels = np.full(4, -1, dtype=np.int64)
    return ArtifactBundle(
        features=features,
        logits=logits,
        labels=labels,
        weights=weights,
        bias=bias,
        class_names=["a", "b"],
        split_tag=split_tag,
    )


def random_bundle(rng: np.random.Generator, n=8, d=3, n_classes=3, split_tag="train") -> ArtifactBundle:
    features = rng.normal(size=(n, d))
    weights = rng.normal(size=(d, n_classes))
    bias = rng.normal(size=n_classes)
    logits = features @ weights + bias
    if split_tag == "train":
        labels = np.concatenate(
            [np.arange(n_classes), rng.integers(0, n_classes, size=n - n_classes)]
        ).astype(np.int64)
    elif split_tag == "test_ood":
        labels = np.full(n, -1, dtype=np.int64)
    else:
        labels = rng.integers(0, n_classes, size=n).astype(np.int64)
    return ArtifactBundle(
        features=features,
        logits=logits,
        labels=labels,
        weights=weights,
        bias=bias,
        class_names=[f"c{i}" for i in range(n_classes)],
        split_tag=split_tag,
    )
