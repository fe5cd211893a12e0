"""Boundary-editing workflows: select flip points that counteract an
identified bias, augment the training set, retrain, and compare the
before/after feature-influence pictures.

Two labeling modes exist: ``same-label`` adds each selected flip point with
its source row's label (pushing the boundary away from those rows in the
chosen dimension); ``flip-label`` adds it with the soft target (1/2, 1/2),
pinning the boundary at that location.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .audit import build_directions, pca_directions, rank_influence
from .data import Dataset
from .flipsolve import FlipConstraint, FlipSolver, SolverOptions
from .model import MlpModel, TrainConfig, accuracy, train_model

SAME_LABEL = "same-label"
FLIP_LABEL = "flip-label"


@dataclass(frozen=True)
class AugmentationPlan:
    """Which flips qualify for augmentation and how they are labeled.

    ``qualifying`` pairs (source label, sign of the feature's movement in the
    flip direction); the default matches the pattern of selecting class-1
    rows whose flip increases the feature and class-0 rows whose flip
    decreases it.
    """

    feature: str
    labeling: str = SAME_LABEL
    qualifying: tuple[tuple[int, int], ...] = ((1, 1), (0, -1))
    constraint: FlipConstraint | None = None

    def __post_init__(self):
        if self.labeling not in (SAME_LABEL, FLIP_LABEL):
            raise ValueError(f"unknown labeling mode '{self.labeling}'")
        for label, sign in self.qualifying:
            if label not in (0, 1) or sign not in (-1, 1):
                raise ValueError("qualifying entries must be (label in {0,1}, sign in {-1,+1})")


@dataclass
class AugmentationRows:
    x: np.ndarray
    labels: np.ndarray             # (k,) class indices or (k, 2) soft targets
    source_row_ids: np.ndarray
    feature_deltas: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]


def select_counteracting_flips(solver: FlipSolver, dataset: Dataset,
                               plan: AugmentationPlan, *,
                               sample: int | None = None,
                               seed: int = 0) -> AugmentationRows:
    """Constrained flips along ``plan.feature`` for qualifying rows."""
    idx_feature = solver.schema.index_of(plan.feature)
    constraint = plan.constraint or FlipConstraint.only([plan.feature])
    ds = dataset
    if sample is not None and sample < ds.n_rows:
        rows = np.sort(np.random.default_rng(seed).choice(ds.n_rows, size=sample,
                                                          replace=False))
        ds = ds.subset(rows)
    labels = ds.hard_labels()
    results = solver.closest_flip_batch(ds.x, constraint)
    wanted = set(plan.qualifying)

    points = []
    kept_labels = []
    kept_ids = []
    deltas = []
    for i, res in enumerate(results):
        if not res.converged:
            continue
        delta = float(res.flip_point[idx_feature] - ds.x[i, idx_feature])
        if delta == 0.0:
            continue
        sign = 1 if delta > 0 else -1
        if (int(labels[i]), sign) in wanted:
            points.append(res.flip_point)
            kept_labels.append(int(labels[i]))
            kept_ids.append(int(ds.row_ids[i]))
            deltas.append(delta)

    if not points:
        warnings.warn(f"no qualifying flips along '{plan.feature}'; selection is empty",
                      stacklevel=2)
        d = ds.x.shape[1]
        empty_labels = (np.zeros((0, 2)) if plan.labeling == FLIP_LABEL
                        else np.zeros(0, dtype=np.int64))
        return AugmentationRows(np.zeros((0, d)), empty_labels,
                                np.zeros(0, dtype=np.int64), np.zeros(0))

    x = np.array(points)
    if plan.labeling == FLIP_LABEL:
        lab = np.full((x.shape[0], 2), 0.5)
    else:
        lab = np.array(kept_labels, dtype=np.int64)
    return AugmentationRows(x, lab, np.array(kept_ids, dtype=np.int64), np.array(deltas))


def _as_soft(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    soft = np.zeros((labels.shape[0], 2))
    soft[np.arange(labels.shape[0]), labels.astype(np.int64)] = 1.0
    return soft


@dataclass
class ModelSnapshot:
    influence_order: list[str]
    first_component_loadings: dict[str, float]
    test_accuracy: float | None

    def rank_of(self, feature: str) -> int:
        return self.influence_order.index(feature) + 1

    def to_json_dict(self) -> dict:
        return {
            "influence_order": self.influence_order,
            "first_component_loadings": self.first_component_loadings,
            "test_accuracy": self.test_accuracy,
        }


@dataclass
class ComparisonBundle:
    before: ModelSnapshot
    after: ModelSnapshot
    feature: str
    labeling: str
    n_augmented: int

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "labeling": self.labeling,
            "n_augmented": self.n_augmented,
            "before": self.before.to_json_dict(),
            "after": self.after.to_json_dict(),
        }


def _snapshot(model: MlpModel, dataset: Dataset, test_dataset: Dataset | None,
              solver_options: SolverOptions | None,
              sample: int | None, seed: int) -> ModelSnapshot:
    solver = FlipSolver(model, dataset.schema, solver_options)
    dirs = build_directions(solver, dataset, sample=sample, seed=seed)
    ranking = rank_influence(dirs)
    _, loadings = pca_directions(dirs)
    test_acc = None
    if test_dataset is not None:
        test_acc = accuracy(model, test_dataset.x, test_dataset.hard_labels())
    return ModelSnapshot(ranking.ordered_features, loadings, test_acc)


def augment_and_retrain(baseline_model: MlpModel, dataset: Dataset,
                        aug: AugmentationRows, plan: AugmentationPlan,
                        layer_sizes, config: TrainConfig, *,
                        test_dataset: Dataset | None = None,
                        solver_options: SolverOptions | None = None,
                        audit_sample: int | None = None,
                        seed: int = 0) -> tuple[MlpModel, ComparisonBundle]:
    """Retrain from scratch on dataset + augmentation rows; the comparison
    bundle recomputes flip directions on the *original* data under both
    models so the rankings are comparable."""
    x_aug = np.vstack([dataset.x, aug.x]) if aug.n_rows else dataset.x
    y_aug = (np.vstack([_as_soft(dataset.labels), _as_soft(aug.labels)])
             if aug.n_rows else _as_soft(dataset.labels))
    new_model, _ = train_model(x_aug, y_aug, layer_sizes, config,
                               feature_schema_hash=dataset.schema.schema_hash())

    before = _snapshot(baseline_model, dataset, test_dataset, solver_options,
                       audit_sample, seed)
    after = _snapshot(new_model, dataset, test_dataset, solver_options,
                      audit_sample, seed)
    bundle = ComparisonBundle(before=before, after=after, feature=plan.feature,
                              labeling=plan.labeling, n_augmented=aug.n_rows)
    return new_model, bundle
