"""Per-input explanation reports.

A report gathers constrained flip computations for one input: which feature
sets cannot flip the model's decision no matter how they move (section A),
the smallest changes that do flip it, per single feature / feature pair /
named measurement-scale group (section B), and the closest unconstrained
flip point with its changed-feature table (section C).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureSchema
from .errors import FlipAuditError
from .flipsolve import CONVERGED, NO_FLIP, FlipConstraint, FlipResult, FlipSolver

REPORT_VERSION = 1


@dataclass(frozen=True)
class ScaleGroup:
    """Named set of features sharing one measurement scale."""

    name: str
    members: tuple[str, ...]


@dataclass
class ReportOptions:
    singles: bool = True
    pairs: bool = False
    groups: bool = True
    unconstrained: bool = True
    custom_subsets: tuple[tuple[str, ...], ...] = ()
    integer_mode: bool = False
    top_pairs: int = 10
    change_threshold: float = 1e-3


@dataclass
class ReportEntry:
    features: tuple[str, ...]
    kind: str                 # single | single-group | pair | scale-group | custom | unconstrained
    result: FlipResult


@dataclass
class ExplanationReport:
    row_id: int | None
    x: np.ndarray
    feature_names: list[str]
    predicted_class: int
    score: tuple[float, float]
    section_a: list[ReportEntry] = field(default_factory=list)
    section_b: list[ReportEntry] = field(default_factory=list)
    section_c: ReportEntry | None = None
    errors: list[tuple[tuple[str, ...], str]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def scale_groups_from_schema(schema: FeatureSchema) -> list[ScaleGroup]:
    return [ScaleGroup(name, tuple(members))
            for name, members in schema.scale_groups.items()]


def _file_entry(report: ExplanationReport, entry: ReportEntry) -> None:
    if entry.result.status == CONVERGED:
        report.section_b.append(entry)
    elif entry.result.status == NO_FLIP:
        report.section_a.append(entry)
    else:
        report.errors.append((entry.features, f"solver status {entry.result.status}"))


def build_report(solver: FlipSolver, x, options: ReportOptions | None = None, *,
                 scale_groups: list[ScaleGroup] | None = None,
                 row_id: int | None = None) -> ExplanationReport:
    """Run the selected constrained-flip sweeps for one input."""
    options = options or ReportOptions()
    schema = solver.schema
    x = np.asarray(x, dtype=np.float64)
    score = solver.model.forward(x)
    report = ExplanationReport(
        row_id=row_id, x=x, feature_names=schema.names,
        predicted_class=int(solver.model.predicted_classes(x[None, :])[0]),
        score=(score.z1, score.z2))
    if scale_groups is None:
        scale_groups = scale_groups_from_schema(schema)

    def attempt(features: tuple[str, ...], kind: str, fn) -> None:
        try:
            result = fn()
        except (FlipAuditError, ValueError) as exc:
            report.errors.append((features, str(exc)))
            return
        _file_entry(report, ReportEntry(features=features, kind=kind, result=result))

    if options.singles:
        t0 = time.perf_counter()
        for name in schema.continuous_names():
            attempt((name,), "single", lambda n=name: solver.flip_1d(x, n))
        for gid in schema.groups:
            attempt((gid,), "single-group",
                    lambda g=gid: solver.closest_flip(x, FlipConstraint.only([g])))
        report.timings["singles"] = time.perf_counter() - t0

    if options.pairs:
        t0 = time.perf_counter()
        for (a, b), result in solver.flip_pairs_sweep(x).items():
            _file_entry(report, ReportEntry(features=(a, b), kind="pair", result=result))
        report.timings["pairs"] = time.perf_counter() - t0

    if options.groups:
        t0 = time.perf_counter()
        for group in scale_groups:
            attempt(tuple(group.members), "scale-group",
                    lambda g=group: solver.closest_flip(
                        x, FlipConstraint.only(list(g.members),
                                               enforce_integer=options.integer_mode)))
        report.timings["groups"] = time.perf_counter() - t0

    for subset in options.custom_subsets:
        attempt(tuple(subset), "custom",
                lambda s=subset: solver.closest_flip(
                    x, FlipConstraint.only(list(s), enforce_integer=options.integer_mode)))

    if options.unconstrained:
        t0 = time.perf_counter()
        attempt(tuple(schema.names), "unconstrained",
                lambda: solver.closest_flip(
                    x, FlipConstraint.unconstrained(enforce_integer=options.integer_mode)))
        report.timings["unconstrained"] = time.perf_counter() - t0
        for i, entry in enumerate(report.section_b):
            if entry.kind == "unconstrained":
                report.section_c = entry
                del report.section_b[i]
                break

    report.section_b.sort(key=lambda e: e.result.distance)
    return report


def changed_features(schema: FeatureSchema, x, flip_point,
                     threshold: float = 1e-3) -> list[dict]:
    """Before/after table of features that moved beyond the threshold (in
    scaled units); one-hot groups are reported as level transitions."""
    x = np.asarray(x, dtype=np.float64)
    fp = np.asarray(flip_point, dtype=np.float64)
    sqrt_w = np.sqrt(schema.scale_weights())
    rows: list[dict] = []
    seen_groups: set[str] = set()
    for j, feat in enumerate(schema.features):
        if feat.group is not None:
            if feat.group in seen_groups:
                continue
            seen_groups.add(feat.group)
            members = schema.groups[feat.group]
            levels = [schema.features[i].level for i in members]
            before = levels[int(np.argmax(x[members]))]
            after = levels[int(np.argmax(fp[members]))]
            if before != after:
                rows.append({"feature": feat.group, "kind": "categorical",
                             "before": before, "after": after})
            continue
        if abs(fp[j] - x[j]) * sqrt_w[j] > threshold:
            rows.append({"feature": feat.name, "kind": feat.kind,
                         "before": float(x[j]), "after": float(fp[j])})
    return rows


def _verify_candidates(solver: FlipSolver, report: ExplanationReport) -> None:
    """Re-score every converged candidate at render time."""
    entries = list(report.section_b)
    if report.section_c is not None:
        entries.append(report.section_c)
    for entry in entries:
        residual = solver.residual_at(entry.result.flip_point)
        if residual > 1e-6:
            raise RuntimeError(
                f"flip candidate for {entry.features} fails re-verification "
                f"(residual {residual:.2e})")


def render_json(report: ExplanationReport,
                solver: FlipSolver | None = None) -> dict:
    """Lossless machine-readable form of a report."""
    if solver is not None:
        _verify_candidates(solver, report)

    def entry_dict(entry: ReportEntry) -> dict:
        return {"features": list(entry.features), "kind": entry.kind,
                "result": entry.result.to_json_dict()}

    return {
        "report_version": REPORT_VERSION,
        "row_id": report.row_id,
        "input": report.x.tolist(),
        "feature_names": report.feature_names,
        "predicted_class": report.predicted_class,
        "score": list(report.score),
        "cannot_flip": [entry_dict(e) for e in report.section_a],
        "can_flip": [entry_dict(e) for e in report.section_b],
        "unconstrained": entry_dict(report.section_c) if report.section_c else None,
        "errors": [{"features": list(f), "message": m} for f, m in report.errors],
        "timings": report.timings,
    }


def parse_report_json(payload: dict) -> ExplanationReport:
    if payload.get("report_version") != REPORT_VERSION:
        raise ValueError(f"unsupported report_version {payload.get('report_version')}")

    def entry(obj: dict) -> ReportEntry:
        return ReportEntry(features=tuple(obj["features"]), kind=obj["kind"],
                           result=FlipResult.from_json_dict(obj["result"]))

    report = ExplanationReport(
        row_id=payload["row_id"],
        x=np.asarray(payload["input"], dtype=np.float64),
        feature_names=list(payload["feature_names"]),
        predicted_class=payload["predicted_class"],
        score=tuple(payload["score"]),
        section_a=[entry(e) for e in payload["cannot_flip"]],
        section_b=[entry(e) for e in payload["can_flip"]],
        section_c=entry(payload["unconstrained"]) if payload["unconstrained"] else None,
        errors=[(tuple(e["features"]), e["message"]) for e in payload["errors"]],
        timings=dict(payload["timings"]),
    )
    return report


def _describe_changes(schema: FeatureSchema, x, result: FlipResult,
                      threshold: float) -> str:
    parts = []
    for row in changed_features(schema, x, result.flip_point, threshold):
        if row["kind"] == "categorical":
            parts.append(f"{row['feature']}: {row['before']} -> {row['after']}")
        else:
            parts.append(f"{row['feature']}: {row['before']:.1f} -> {row['after']:.1f}")
    return "; ".join(parts) if parts else "(no feature moved beyond the display threshold)"


def render_text(report: ExplanationReport, schema: FeatureSchema,
                solver: FlipSolver | None = None,
                options: ReportOptions | None = None) -> str:
    """Three-section human-readable report."""
    if solver is not None:
        _verify_candidates(solver, report)
    options = options or ReportOptions()
    thr = options.change_threshold
    lines = []
    rid = f"row {report.row_id}" if report.row_id is not None else "input"
    lines.append(f"Explanation report for {rid}")
    lines.append(f"Model decision: class {report.predicted_class} "
                 f"(scores z1={report.score[0]:.4f}, z2={report.score[1]:.4f})")
    lines.append("")
    lines.append("Changes that will NOT flip the decision:")
    if report.section_a:
        for entry in report.section_a:
            label = " & ".join(entry.features)
            suffix = " (any level)" if entry.kind == "single-group" else " alone" \
                if entry.kind == "single" else ""
            lines.append(f"  - {label}{suffix}")
    else:
        lines.append("  (none found among the requested sweeps)")
    lines.append("")
    lines.append("Smallest changes that WILL flip the decision:")
    if report.section_b:
        pairs_shown = 0
        for entry in report.section_b:
            if entry.kind == "pair":
                pairs_shown += 1
                if pairs_shown > options.top_pairs:
                    continue
            label = " & ".join(entry.features)
            change = _describe_changes(schema, report.x, entry.result, thr)
            lines.append(f"  - [{entry.kind}] {label}: {change} "
                         f"(distance {entry.result.distance:.4f})")
        hidden = max(0, pairs_shown - options.top_pairs)
        if hidden:
            lines.append(f"  ... {hidden} more flipping pairs omitted "
                         "(full list in the JSON report)")
    else:
        lines.append("  No single-feature, pair, or group change flips the decision.")
    lines.append("")
    lines.append("Closest overall change (all features free):")
    if report.section_c is not None:
        res = report.section_c.result
        lines.append(f"  distance {res.distance:.4f}, residual {res.boundary_residual:.1e}")
        for row in changed_features(schema, report.x, res.flip_point, thr):
            if row["kind"] == "categorical":
                lines.append(f"    {row['feature']}: {row['before']} -> {row['after']}")
            else:
                lines.append(f"    {row['feature']}: {row['before']:.1f} -> {row['after']:.1f}")
    else:
        lines.append("  (not computed)")
    if report.errors:
        lines.append("")
        lines.append("Sweeps that did not complete:")
        for features, message in report.errors:
            lines.append(f"  - {' & '.join(features)}: {message}")
    total = sum(report.timings.values())
    lines.append("")
    lines.append(f"Computed in {total:.2f}s "
                 + " ".join(f"[{k}: {v:.2f}s]" for k, v in report.timings.items()))
    return "\n".join(lines) + "\n"
