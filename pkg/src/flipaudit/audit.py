"""Group-level auditing built on flip directions.

The direction matrix F stacks x_hat - x for every converged flip over a
dataset; pivoted QR on F ranks features by their ability to flip decisions,
PCA reveals common movement patterns, and per-feature change frequencies
summarize how often each feature participates in a flip. The binary-swap
audit measures how a protected binary attribute shifts classifications and
boundary distances.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg
from .data import Dataset, flip_binary_feature
from .flipsolve import FlipConstraint, FlipSolver

ZERO_COLUMN_TOL = 1e-10


@dataclass
class DirectionMatrix:
    """Stacked flip directions with per-row provenance."""

    directions: np.ndarray          # (m, d): flip_point - input, converged rows only
    feature_names: list[str]
    row_ids: np.ndarray
    original_labels: np.ndarray
    predicted_labels: np.ndarray
    correct: np.ndarray
    distances: np.ndarray
    base_points: np.ndarray
    flip_points: np.ndarray
    failures: list[tuple[int, str]]  # (row_id, status) for non-converged rows

    @property
    def n_rows(self) -> int:
        return self.directions.shape[0]

    @property
    def coverage(self) -> float:
        total = self.n_rows + len(self.failures)
        return self.n_rows / total if total else 0.0

    def filtered(self, mask) -> "DirectionMatrix":
        mask = np.asarray(mask)
        return DirectionMatrix(
            self.directions[mask], self.feature_names, self.row_ids[mask],
            self.original_labels[mask], self.predicted_labels[mask],
            self.correct[mask], self.distances[mask], self.base_points[mask],
            self.flip_points[mask], self.failures)


def build_directions(solver: FlipSolver, dataset: Dataset,
                     constraint: FlipConstraint | None = None, *,
                     predicted_class: int | None = None,
                     correctness: bool | None = None,
                     sample: int | None = None, seed: int = 0,
                     threads: int = 1) -> DirectionMatrix:
    """Compute flip points for (a filtered subset of) a dataset and stack the
    converged directions into F = B - D."""
    ds = dataset
    labels = ds.hard_labels()
    predicted = solver.model.predicted_classes(ds.x)
    keep = np.ones(ds.n_rows, dtype=bool)
    if predicted_class is not None:
        keep &= predicted == predicted_class
    if correctness is not None:
        keep &= (predicted == labels) == correctness
    idx = np.flatnonzero(keep)
    if sample is not None and sample < idx.size:
        idx = np.sort(np.random.default_rng(seed).choice(idx, size=sample, replace=False))

    xs = ds.x[idx]
    if threads > 1 and idx.size > threads:
        chunks = np.array_split(np.arange(idx.size), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda c: solver.closest_flip_batch(xs[c], constraint), chunks))
        results = [r for part in parts for r in part]
    else:
        results = solver.closest_flip_batch(xs, constraint)
    ok = np.array([r.converged for r in results], dtype=bool)
    directions = np.array([results[i].direction for i in np.flatnonzero(ok)]) \
        if ok.any() else np.zeros((0, ds.x.shape[1]))
    failures = [(int(ds.row_ids[idx[i]]), results[i].status)
                for i in np.flatnonzero(~ok)]
    sel = idx[ok]
    return DirectionMatrix(
        directions=directions,
        feature_names=ds.schema.names,
        row_ids=ds.row_ids[sel],
        original_labels=labels[sel],
        predicted_labels=predicted[sel],
        correct=(predicted == labels)[sel],
        distances=np.array([r.distance for r in results if r.converged]),
        base_points=ds.x[sel],
        flip_points=np.array([r.flip_point for r in results if r.converged])
        if ok.any() else np.zeros((0, ds.x.shape[1])),
        failures=failures)


@dataclass
class InfluenceRanking:
    """Feature ordering from pivoted QR on the direction matrix."""

    ordered_features: list[str]
    pivot_magnitudes: np.ndarray
    zero_influence: list[str]
    numerical_rank: int
    rank_deficient: bool

    def rank_of(self, name: str) -> int:
        """1-based rank; 1 = most influential."""
        return self.ordered_features.index(name) + 1

    def to_json_dict(self) -> dict:
        return {
            "ordered_features": self.ordered_features,
            "pivot_magnitudes": self.pivot_magnitudes.tolist(),
            "zero_influence": self.zero_influence,
            "numerical_rank": self.numerical_rank,
            "rank_deficient": self.rank_deficient,
        }


def rank_influence(dirs: DirectionMatrix) -> InfluenceRanking:
    """Order features by the pivot sequence of a pivoted QR on F."""
    f = dirs.directions
    if f.shape[0] < 1:
        raise ValueError("direction matrix has no converged rows")
    qr = linalg.pivoted_qr(f)
    order = [dirs.feature_names[j] for j in qr.permutation]
    diag = qr.diag_magnitudes
    magnitudes = np.zeros(len(order))
    magnitudes[:diag.size] = diag
    fro = np.linalg.norm(f)
    col_norms = np.linalg.norm(f, axis=0)
    zero = [dirs.feature_names[j] for j in range(f.shape[1])
            if col_norms[j] <= ZERO_COLUMN_TOL * max(fro, 1e-300)]
    rank = linalg.rank_from_qr(qr)
    return InfluenceRanking(
        ordered_features=order,
        pivot_magnitudes=magnitudes,
        zero_influence=zero,
        numerical_rank=rank,
        rank_deficient=rank < min(f.shape),
    )


def pca_directions(dirs: DirectionMatrix) -> tuple[linalg.PcaResult, dict[str, float]]:
    """PCA of the direction matrix plus signed first-component loadings.

    Components are re-oriented so the majority of rows project positively
    onto each one.
    """
    if dirs.n_rows < 2:
        raise ValueError("need at least 2 converged directions for PCA")
    result = linalg.pca(dirs.directions)
    projections = result.project(dirs.directions)
    signs = np.where(np.sum(projections > 0.0, axis=0)
                     >= np.sum(projections < 0.0, axis=0), 1.0, -1.0)
    components = result.components * signs[:, None]
    result = linalg.PcaResult(components=components,
                              explained_variance=result.explained_variance,
                              mean=result.mean)
    loadings = dict(zip(dirs.feature_names, components[0]))
    return result, loadings


@dataclass
class FeatureChange:
    frequency: float
    increased: float
    decreased: float


@dataclass
class GroupChange:
    frequency: float
    most_common_entry: str | None
    most_common_exit: str | None
    entries: dict[str, int]
    exits: dict[str, int]


@dataclass
class ChangeFrequencyReport:
    features: dict[str, FeatureChange]
    groups: dict[str, GroupChange]

    def to_json_dict(self) -> dict:
        return {
            "features": {k: vars(v) for k, v in self.features.items()},
            "groups": {k: vars(v) for k, v in self.groups.items()},
        }


def change_frequency(dirs: DirectionMatrix, schema,
                     threshold: float = 1e-3) -> ChangeFrequencyReport:
    """Per-feature fraction of rows changed beyond ``threshold`` (in scaled
    units sqrt(w) * |delta|), with direction-of-change tallies; one-hot groups
    report level transitions."""
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    m = max(dirs.n_rows, 1)
    sqrt_w = np.sqrt(schema.scale_weights())
    features: dict[str, FeatureChange] = {}
    for j, feat in enumerate(schema.features):
        if feat.group is not None:
            continue
        delta = dirs.directions[:, j] if dirs.n_rows else np.zeros(0)
        scaled = sqrt_w[j] * delta
        features[feat.name] = FeatureChange(
            frequency=float(np.mean(np.abs(scaled) > threshold)) if dirs.n_rows else 0.0,
            increased=float(np.mean(scaled > threshold)) if dirs.n_rows else 0.0,
            decreased=float(np.mean(scaled < -threshold)) if dirs.n_rows else 0.0,
        )

    groups: dict[str, GroupChange] = {}
    for gid, members in schema.groups.items():
        if dirs.n_rows == 0:
            groups[gid] = GroupChange(0.0, None, None, {}, {})
            continue
        levels = [schema.features[i].level for i in members]
        before = np.argmax(dirs.base_points[:, members], axis=1)
        after = np.argmax(dirs.flip_points[:, members], axis=1)
        changed = before != after
        entries = Counter(levels[a] for a in after[changed])
        exits = Counter(levels[b] for b in before[changed])
        groups[gid] = GroupChange(
            frequency=float(np.mean(changed)),
            most_common_entry=entries.most_common(1)[0][0] if entries else None,
            most_common_exit=exits.most_common(1)[0][0] if exits else None,
            entries=dict(entries),
            exits=dict(exits),
        )
    return ChangeFrequencyReport(features=features, groups=groups)


@dataclass
class SwapReport:
    """Effect of inverting one binary attribute across a dataset."""

    feature: str
    n_rows: int
    n_changed: int
    fraction_changed: float
    mean_distance_change: float
    median_distance_change: float
    n_distance_pairs: int
    changed_row_ids: np.ndarray
    influence: InfluenceRanking | None
    first_component_loadings: dict[str, float] | None

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "n_rows": self.n_rows,
            "n_changed": self.n_changed,
            "fraction_changed": self.fraction_changed,
            "mean_distance_change": self.mean_distance_change,
            "median_distance_change": self.median_distance_change,
            "n_distance_pairs": self.n_distance_pairs,
            "changed_row_ids": self.changed_row_ids.tolist(),
            "influence": self.influence.to_json_dict() if self.influence else None,
            "first_component_loadings": self.first_component_loadings,
        }


def swap_binary_audit(solver: FlipSolver, dataset: Dataset, feature: str,
                      constraint: FlipConstraint | None = None, *,
                      sample: int | None = None, seed: int = 0) -> SwapReport:
    """Algorithm-2 step-8 audit: invert ``feature`` for every row, compare
    classifications and boundary distances, and analyze the directions of
    the rows whose class changed."""
    ds = dataset
    if sample is not None and sample < ds.n_rows:
        idx = np.sort(np.random.default_rng(seed).choice(ds.n_rows, size=sample, replace=False))
        ds = ds.subset(idx)
    swapped = flip_binary_feature(ds, feature)
    pred_orig = solver.model.predicted_classes(ds.x)
    pred_swap = solver.model.predicted_classes(swapped.x)
    changed = pred_orig != pred_swap
    n_changed = int(np.count_nonzero(changed))

    unchanged_idx = np.flatnonzero(~changed)
    mean_change = 0.0
    median_change = 0.0
    n_pairs = 0
    if unchanged_idx.size:
        res_orig = solver.closest_flip_batch(ds.x[unchanged_idx], constraint)
        res_swap = solver.closest_flip_batch(swapped.x[unchanged_idx], constraint)
        deltas = [rs.distance - ro.distance
                  for ro, rs in zip(res_orig, res_swap)
                  if ro.converged and rs.converged]
        n_pairs = len(deltas)
        if deltas:
            mean_change = float(np.mean(deltas))
            median_change = float(np.median(deltas))

    influence = None
    loadings = None
    if n_changed:
        changed_ds = swapped.subset(np.flatnonzero(changed))
        dirs = build_directions(solver, changed_ds, constraint)
        if dirs.n_rows >= 1:
            influence = rank_influence(dirs)
        if dirs.n_rows >= 2:
            _, loadings = pca_directions(dirs)

    return SwapReport(
        feature=feature,
        n_rows=ds.n_rows,
        n_changed=n_changed,
        fraction_changed=n_changed / ds.n_rows if ds.n_rows else 0.0,
        mean_distance_change=mean_change,
        median_distance_change=median_change,
        n_distance_pairs=n_pairs,
        changed_row_ids=ds.row_ids[changed],
        influence=influence,
        first_component_loadings=loadings,
    )


def misclassification_proximity(solver: FlipSolver, dataset: Dataset, *,
                                constraint: FlipConstraint | None = None,
                                sample: int | None = None,
                                seed: int = 0) -> tuple[float, float]:
    """Median flip distance of misclassified vs correctly classified rows."""
    wrong = build_directions(solver, dataset, constraint, correctness=False,
                             sample=sample, seed=seed)
    right = build_directions(solver, dataset, constraint, correctness=True,
                             sample=sample, seed=seed)
    if wrong.n_rows == 0 or right.n_rows == 0:
        raise ValueError("need converged flips on both correct and misclassified rows")
    return float(np.median(wrong.distances)), float(np.median(right.distances))


def audit_report_json(dirs: DirectionMatrix, schema,
                      threshold: float = 1e-3) -> dict:
    """Bundle ranking, PCA loadings, and change frequencies for serialization."""
    ranking = rank_influence(dirs)
    payload = {
        "n_directions": dirs.n_rows,
        "coverage": dirs.coverage,
        "failures": [{"row_id": rid, "status": status} for rid, status in dirs.failures],
        "influence": ranking.to_json_dict(),
        "change_frequency": change_frequency(dirs, schema, threshold).to_json_dict(),
    }
    if dirs.n_rows >= 2:
        pca_result, loadings = pca_directions(dirs)
        payload["pca"] = {
            "explained_variance": pca_result.explained_variance.tolist(),
            "first_component_loadings": loadings,
        }
    return payload


def audit_report_text(payload: dict, top: int = 10) -> str:
    """Human-readable summary of an audit payload."""
    lines = []
    lines.append(f"Converged flip directions: {payload['n_directions']} "
                 f"(coverage {payload['coverage']:.1%})")
    ranking = payload["influence"]
    lines.append("Most influential features (pivoted QR order):")
    for name in ranking["ordered_features"][:top]:
        lines.append(f"  {name}")
    if ranking["zero_influence"]:
        lines.append("Features with no influence: " + ", ".join(ranking["zero_influence"]))
    if "pca" in payload:
        loadings = payload["pca"]["first_component_loadings"]
        ranked = sorted(loadings.items(), key=lambda kv: kv[1])
        neg = [k for k, v in ranked[:3] if v < 0]
        pos = [k for k, v in ranked[::-1][:3] if v > 0]
        if pos:
            lines.append("First component, positive impact: " + ", ".join(pos))
        if neg:
            lines.append("First component, negative impact: " + ", ".join(neg))
    freq = payload["change_frequency"]
    frequent = sorted(freq["features"].items(), key=lambda kv: -kv[1]["frequency"])[:top]
    lines.append("Change frequency (continuous/binary features):")
    for name, stats in frequent:
        lines.append(f"  {name}: {stats['frequency']:.1%} "
                     f"(up {stats['increased']:.1%}, down {stats['decreased']:.1%})")
    for gid, stats in freq["groups"].items():
        entry = stats["most_common_entry"] or "-"
        exit_ = stats["most_common_exit"] or "-"
        lines.append(f"  group {gid}: {stats['frequency']:.1%} changed "
                     f"(most common entry {entry}, exit {exit_})")
    return "\n".join(lines) + "\n"
