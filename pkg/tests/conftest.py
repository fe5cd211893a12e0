"""Shared fixtures and small model/schema factories."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from flipaudit.data import Dataset, Feature, FeatureSchema
from flipaudit.model import MlpModel

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_CSV = REPO_ROOT / "data" / "demo_credit.csv"
DEMO_SCHEMA = REPO_ROOT / "data" / "demo_credit_schema.json"

# Real UCI datasets are license/network gated; tests that need them look here.
DATA_DIR = Path(os.environ.get("FLIPAUDIT_DATA_DIR", REPO_ROOT / "data"))


def dataset_files(name: str) -> tuple[Path, Path]:
    return DATA_DIR / f"{name}.csv", DATA_DIR / f"{name}_schema.json"


def require_dataset(name: str) -> tuple[Path, Path]:
    csv_path, schema_path = dataset_files(name)
    if not (csv_path.exists() and schema_path.exists()):
        pytest.skip(f"{name} dataset not present under {DATA_DIR} "
                    f"(run scripts/fetch_data.py on a machine with network access)")
    return csv_path, schema_path


def continuous_schema(n: int, weight: float = 1.0, lower=None, upper=None) -> FeatureSchema:
    return FeatureSchema([
        Feature(name=f"f{i}", kind="continuous", scale_weight=weight,
                lower=lower, upper=upper)
        for i in range(n)
    ])


def random_mlp(sizes, rng, scale: float = 1.0) -> MlpModel:
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(size=(n_in, n_out)) * scale / np.sqrt(n_in))
        biases.append(rng.normal(size=n_out) * 0.3)
    return MlpModel(sizes, weights, biases)


def linear_model(a: np.ndarray, c: float) -> MlpModel:
    """Single linear layer whose logit gap is a . x + c."""
    d = a.shape[0]
    w = np.zeros((d, 2))
    w[:, 0] = a
    return MlpModel([d, 2], [w], [np.array([c, 0.0])])


def hyperplane_projection(x, a, c, weights=None):
    """Closest point on a.x + c = 0 in the weighted norm (the flip oracle
    for linear models)."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    t = (a @ x + c) / np.sum(a * a / w)
    return x - t * (a / w)


@pytest.fixture(scope="session")
def demo_dataset() -> Dataset:
    from flipaudit.data import load_csv
    return load_csv(DEMO_CSV, DEMO_SCHEMA)


@pytest.fixture(scope="session")
def demo_model(demo_dataset):
    """One model trained on the shipped demo data, reused across tests."""
    from flipaudit.data import split
    from flipaudit.model import TrainConfig, train_model
    train_set, test_set = split(demo_dataset, 0.2, seed=0)
    model, _ = train_model(
        train_set.x, train_set.labels, [len(demo_dataset.schema), 12, 8, 6, 2],
        TrainConfig(epochs=150, batch_size=128, learning_rate=0.05, seed=0),
        feature_schema_hash=demo_dataset.schema.schema_hash())
    return model, train_set, test_set
