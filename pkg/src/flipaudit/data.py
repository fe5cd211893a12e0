"""Dataset ingestion and schema-driven encoding.

A schema JSON file describes the *raw* CSV columns; loading expands each
categorical column into a one-hot group and yields an encoded
:class:`FeatureSchema` whose entries map 1:1 onto matrix columns. Datasets are
immutable; every transformation returns a new instance.

Schema file format::

    {
      "label": {"name": "outcome", "values": ["good", "bad"]},
      "features": [
        {"name": "age", "kind": "continuous", "bounds": [18, 95],
         "integer": true, "scale_weight": 0.013, "scale_group": "years"},
        {"name": "gender", "kind": "categorical", "levels": ["Male", "Female"]},
        {"name": "owns_home", "kind": "binary"}
      ]
    }

``levels`` may be omitted to discover them from the data; ``scale_weight``
defaults to 1/(max-min) of the loaded values for continuous features and 1
for binary ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import CsvParseError, IntegrityError, SchemaError

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass(frozen=True)
class Feature:
    """One encoded matrix column."""

    name: str
    kind: str
    group: str | None = None
    level: str | None = None
    lower: float | None = None
    upper: float | None = None
    integer: bool = False
    scale_weight: float = 1.0
    scale_group: str | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, BINARY):
            raise SchemaError(f"feature '{self.name}': unknown kind '{self.kind}'")
        if not (np.isfinite(self.scale_weight) and self.scale_weight > 0.0):
            raise SchemaError(f"feature '{self.name}': scale_weight must be finite and positive")


class FeatureSchema:
    """Encoded feature list with one-hot group bookkeeping."""

    def __init__(self, features: Iterable[Feature], label_name: str = "label",
                 label_values: tuple[str, str] | None = None):
        self.features: tuple[Feature, ...] = tuple(features)
        self.label_name = label_name
        self.label_values = label_values
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate encoded feature names")
        self._index = {f.name: i for i, f in enumerate(self.features)}
        self.groups: dict[str, list[int]] = {}
        for i, f in enumerate(self.features):
            if f.group is not None:
                self.groups.setdefault(f.group, []).append(i)
        for gid, members in self.groups.items():
            if len(members) < 2:
                raise SchemaError(f"one-hot group '{gid}' has fewer than 2 members")
        self.scale_groups: dict[str, list[str]] = {}
        for f in self.features:
            if f.scale_group is not None:
                self.scale_groups.setdefault(f.scale_group, []).append(f.name)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        if name not in self._index:
            raise SchemaError(f"unknown feature '{name}'")
        return self._index[name]

    def has_feature(self, name: str) -> bool:
        return name in self._index

    def scale_weights(self) -> np.ndarray:
        return np.array([f.scale_weight for f in self.features])

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([f.lower if f.lower is not None else -np.inf for f in self.features])
        hi = np.array([f.upper if f.upper is not None else np.inf for f in self.features])
        return lo, hi

    def continuous_names(self) -> list[str]:
        return [f.name for f in self.features if f.kind == CONTINUOUS]

    def to_json(self) -> dict:
        entries = []
        for f in self.features:
            entries.append({
                "name": f.name, "kind": f.kind, "group": f.group, "level": f.level,
                "lower": f.lower, "upper": f.upper, "integer": f.integer,
                "scale_weight": f.scale_weight, "scale_group": f.scale_group,
            })
        return {"label": {"name": self.label_name, "values": self.label_values},
                "features": entries}

    def schema_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def weighted_distance(self, a, b) -> float:
        d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
        return float(np.sqrt(np.sum(self.scale_weights() * d * d)))


@dataclass(frozen=True)
class Dataset:
    """Row-major feature matrix with labels and its encoding schema."""

    x: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    row_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        if self.x.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.x.shape[1] != len(self.schema):
            raise SchemaError(
                f"matrix has {self.x.shape[1]} columns but schema describes {len(self.schema)}")
        labels = np.asarray(self.labels)
        if labels.shape[0] != self.x.shape[0]:
            raise ValueError("labels and features disagree on row count")
        object.__setattr__(self, "labels", labels)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(self.x.shape[0], dtype=np.int64))
        else:
            object.__setattr__(self, "row_ids", np.asarray(self.row_ids, dtype=np.int64))
        self._check_one_hot()

    def _check_one_hot(self):
        for gid, members in self.schema.groups.items():
            block = self.x[:, members]
            if not (np.all(np.isin(block, (0.0, 1.0))) and np.all(block.sum(axis=1) == 1.0)):
                raise IntegrityError(f"one-hot group '{gid}' must have exactly one active member per row")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    def hard_labels(self) -> np.ndarray:
        if self.labels.ndim == 2:
            return np.argmax(self.labels, axis=1).astype(np.int64)
        return self.labels.astype(np.int64)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.x[indices], self.labels[indices], self.schema, self.row_ids[indices])

    def active_level(self, group: str) -> np.ndarray:
        """Per-row active level label of a one-hot group."""
        members = self.schema.groups.get(group)
        if members is None:
            raise SchemaError(f"unknown one-hot group '{group}'")
        levels = np.array([self.schema.features[i].level for i in members], dtype=object)
        return levels[np.argmax(self.x[:, members], axis=1)]


def _parse_raw_schema(schema_path) -> tuple[list[dict], str, tuple[str, str] | None]:
    try:
        with open(schema_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file is not valid JSON: {exc}") from exc
    if "features" not in raw or not isinstance(raw["features"], list):
        raise SchemaError("schema file must contain a 'features' array")
    label = raw.get("label", {})
    label_name = label.get("name", "label")
    label_values = tuple(label["values"]) if "values" in label else None
    if label_values is not None and len(label_values) != 2:
        raise SchemaError("label 'values' must list exactly two values: [class0, class1]")
    for entry in raw["features"]:
        if "name" not in entry or "kind" not in entry:
            raise SchemaError("every schema feature needs 'name' and 'kind'")
        if entry["kind"] not in (CONTINUOUS, BINARY, "categorical"):
            raise SchemaError(f"feature '{entry['name']}': unknown kind '{entry['kind']}'")
    return raw["features"], label_name, label_values


def load_csv(path, schema_path) -> Dataset:
    """Load a CSV file against a raw-column schema, one-hot encoding
    categorical columns."""
    raw_features, label_name, label_values = _parse_raw_schema(schema_path)
    raw_names = [e["name"] for e in raw_features]

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: file is empty") from None
        rows = [row for row in reader if row]

    header = [h.strip() for h in header]
    expected = set(raw_names) | {label_name}
    for col in header:
        if col not in expected:
            raise SchemaError(f"CSV column '{col}' is not declared in the schema")
    for name in raw_names:
        if name not in header:
            raise SchemaError(f"schema feature '{name}' is missing from the CSV header")
    if label_name not in header:
        raise SchemaError(f"label column '{label_name}' is missing from the CSV header")
    col_of = {name: header.index(name) for name in header}

    n = len(rows)
    # First pass: parse cells, discover categorical levels where not declared.
    levels: dict[str, list[str]] = {}
    for entry in raw_features:
        if entry["kind"] == "categorical":
            declared = entry.get("levels")
            levels[entry["name"]] = list(declared) if declared else sorted(
                {row[col_of[entry["name"]]].strip() for row in rows})

    columns: dict[str, np.ndarray] = {}
    for entry in raw_features:
        name = entry["name"]
        j = col_of[name]
        if entry["kind"] == CONTINUOUS:
            vals = np.empty(n)
            for i, row in enumerate(rows):
                cell = row[j].strip()
                try:
                    vals[i] = float(cell)
                except ValueError:
                    raise CsvParseError(
                        f"row {i + 1}, column '{name}': cannot parse '{cell}' as a number") from None
            columns[name] = vals
        elif entry["kind"] == BINARY:
            vals = np.empty(n)
            for i, row in enumerate(rows):
                cell = row[j].strip()
                if cell not in ("0", "1"):
                    raise CsvParseError(
                        f"row {i + 1}, column '{name}': binary cell must be 0 or 1, got '{cell}'")
                vals[i] = float(cell)
            columns[name] = vals
        else:
            lvl_index = {lvl: k for k, lvl in enumerate(levels[name])}
            block = np.zeros((n, len(lvl_index)))
            for i, row in enumerate(rows):
                cell = row[j].strip()
                if cell not in lvl_index:
                    raise IntegrityError(
                        f"row {i + 1}, column '{name}': level '{cell}' is not among "
                        f"declared levels {levels[name]}")
                block[i, lvl_index[cell]] = 1.0
            columns[name] = block

    label_col = col_of[label_name]
    y = np.empty(n, dtype=np.int64)
    for i, row in enumerate(rows):
        cell = row[label_col].strip()
        if label_values is not None:
            if cell not in label_values:
                raise CsvParseError(
                    f"row {i + 1}, column '{label_name}': label '{cell}' not in {label_values}")
            y[i] = label_values.index(cell)
        else:
            if cell not in ("0", "1"):
                raise CsvParseError(
                    f"row {i + 1}, column '{label_name}': label must be 0 or 1, got '{cell}'")
            y[i] = int(cell)

    encoded: list[Feature] = []
    blocks: list[np.ndarray] = []
    for entry in raw_features:
        name = entry["name"]
        bounds = entry.get("bounds")
        lower, upper = (bounds if bounds is not None else (None, None))
        if entry["kind"] == CONTINUOUS:
            vals = columns[name]
            weight = entry.get("scale_weight")
            if weight is None:
                spread = float(vals.max() - vals.min())
                weight = 1.0 / spread if spread > 0.0 else 1.0
            encoded.append(Feature(
                name=name, kind=CONTINUOUS, lower=lower, upper=upper,
                integer=bool(entry.get("integer", False)), scale_weight=float(weight),
                scale_group=entry.get("scale_group")))
            blocks.append(vals[:, None])
        elif entry["kind"] == BINARY:
            encoded.append(Feature(
                name=name, kind=BINARY, lower=0.0, upper=1.0, integer=True,
                scale_weight=float(entry.get("scale_weight", 1.0)),
                scale_group=entry.get("scale_group")))
            blocks.append(columns[name][:, None])
        else:
            for lvl in levels[name]:
                encoded.append(Feature(
                    name=f"{name}={lvl}", kind=BINARY, group=name, level=lvl,
                    lower=0.0, upper=1.0, integer=True,
                    scale_weight=float(entry.get("scale_weight", 1.0)),
                    scale_group=entry.get("scale_group")))
            blocks.append(columns[name])

    schema = FeatureSchema(encoded, label_name=label_name, label_values=label_values)
    x = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return Dataset(x=x, labels=y, schema=schema)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled train/test split; test gets floor(n * fraction) rows."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = dataset.n_rows
    n_test = int(n * test_fraction)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _resolve_drop_columns(schema: FeatureSchema, names) -> set[int]:
    cols: set[int] = set()
    touched_groups: set[str] = set()
    for name in names:
        if name in schema.groups:
            cols.update(schema.groups[name])
            touched_groups.add(name)
        elif schema.has_feature(name):
            idx = schema.index_of(name)
            cols.add(idx)
            grp = schema.features[idx].group
            if grp is not None:
                touched_groups.add(grp)
        else:
            raise SchemaError(f"unknown feature or group '{name}'")
    for gid in touched_groups:
        members = set(schema.groups[gid])
        if not members.issubset(cols):
            raise IntegrityError(
                f"cannot drop part of one-hot group '{gid}'; drop the whole group")
    return cols


def drop_features(dataset: Dataset, names) -> Dataset:
    """Remove features (or whole one-hot groups) by name."""
    names = list(names)
    if not names:
        return dataset
    cols = _resolve_drop_columns(dataset.schema, names)
    keep = [i for i in range(len(dataset.schema)) if i not in cols]
    schema = FeatureSchema([dataset.schema.features[i] for i in keep],
                           label_name=dataset.schema.label_name,
                           label_values=dataset.schema.label_values)
    return Dataset(dataset.x[:, keep], dataset.labels, schema, dataset.row_ids)


@dataclass(frozen=True)
class Clause:
    feature: str
    op: str
    value: str

    def __post_init__(self):
        if self.op not in ("=", "<", ">"):
            raise ValueError(f"unsupported filter operator '{self.op}'")


@dataclass(frozen=True)
class GroupFilter:
    """Conjunction of per-feature clauses, e.g. gender=Female, age<35."""

    clauses: tuple[Clause, ...]

    @classmethod
    def parse(cls, text: str) -> "GroupFilter":
        clauses = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            for op in ("<", ">", "="):
                if op in part:
                    name, value = part.split(op, 1)
                    clauses.append(Clause(name.strip(), op, value.strip()))
                    break
            else:
                raise ValueError(f"cannot parse filter clause '{part}'")
        if not clauses:
            raise ValueError("empty group filter")
        return cls(tuple(clauses))

    def mask(self, dataset: Dataset) -> np.ndarray:
        schema = dataset.schema
        result = np.ones(dataset.n_rows, dtype=bool)
        for clause in self.clauses:
            if clause.feature in schema.groups:
                if clause.op != "=":
                    raise ValueError(f"group '{clause.feature}' only supports '=' filters")
                result &= dataset.active_level(clause.feature) == clause.value
                continue
            idx = schema.index_of(clause.feature)
            try:
                value = float(clause.value)
            except ValueError:
                raise ValueError(
                    f"clause '{clause.feature}{clause.op}{clause.value}': value must be numeric "
                    "for non-categorical features") from None
            col = dataset.x[:, idx]
            if clause.op == "=":
                result &= col == value
            elif clause.op == "<":
                result &= col < value
            else:
                result &= col > value
        return result


def undersample(dataset: Dataset, flt: GroupFilter, keep_fraction: float, seed: int) -> Dataset:
    """Keep floor(count * keep_fraction) of the rows matching the filter;
    all other rows are untouched."""
    if not (0.0 <= keep_fraction <= 1.0):
        raise ValueError(f"keep_fraction must lie in [0, 1], got {keep_fraction}")
    mask = flt.mask(dataset)
    matching = np.flatnonzero(mask)
    n_keep = int(len(matching) * keep_fraction)
    rng = np.random.default_rng(seed)
    kept = rng.choice(matching, size=n_keep, replace=False) if n_keep < len(matching) else matching
    keep_idx = np.sort(np.concatenate([np.flatnonzero(~mask), kept]))
    return dataset.subset(keep_idx)


def flip_binary_feature(dataset: Dataset, name: str) -> Dataset:
    """Invert a binary feature, or swap the two levels of a 2-level group."""
    schema = dataset.schema
    x = dataset.x.copy()
    if name in schema.groups:
        members = schema.groups[name]
        if len(members) != 2:
            raise ValueError(f"group '{name}' has {len(members)} levels; only 2-level groups can be flipped")
        x[:, [members[0], members[1]]] = x[:, [members[1], members[0]]]
    elif schema.has_feature(name):
        idx = schema.index_of(name)
        feat = schema.features[idx]
        if feat.kind != BINARY or feat.group is not None:
            raise ValueError(f"'{name}' is not a standalone binary feature; name its group instead")
        x[:, idx] = 1.0 - x[:, idx]
    else:
        raise SchemaError(f"unknown feature or group '{name}'")
    return Dataset(x, dataset.labels, schema, dataset.row_ids)
