"""Explanation reports: section assignment, rendering, round-trip."""

import json
import time

import numpy as np
import pytest

from flipaudit.data import Feature, FeatureSchema
from flipaudit.explain import (
    ReportOptions,
    ScaleGroup,
    build_report,
    changed_features,
    parse_report_json,
    render_json,
    render_text,
    scale_groups_from_schema,
)
from flipaudit.flipsolve import FlipSolver, SolverOptions
from flipaudit.model import MlpModel

from conftest import continuous_schema, linear_model, random_mlp


def single_feature_model(d: int, active: int, bound=4.0):
    """Linear model that depends on exactly one feature."""
    a = np.zeros(d)
    a[active] = 1.0
    return linear_model(a, -1.0), continuous_schema(d, lower=-bound, upper=bound)


class TestBuildReport:
    def test_inert_features_land_in_section_a(self):
        model, schema = single_feature_model(4, active=2)
        solver = FlipSolver(model, schema)
        x = np.zeros(4)
        report = build_report(solver, x, ReportOptions(pairs=False, groups=False,
                                                       unconstrained=False))
        flippers = {e.features for e in report.section_b}
        blocked = {e.features for e in report.section_a}
        assert flippers == {("f2",)}
        assert blocked == {("f0",), ("f1",), ("f3",)}

    def test_sections_disjoint(self):
        rng = np.random.default_rng(0)
        model = random_mlp([3, 5, 2], rng, scale=2.0)
        solver = FlipSolver(model, continuous_schema(3, lower=-4.0, upper=4.0))
        report = build_report(solver, rng.normal(size=3),
                              ReportOptions(pairs=True))
        a = {e.features for e in report.section_a}
        b = {e.features for e in report.section_b}
        assert not (a & b)

    def test_section_c_unconstrained(self):
        rng = np.random.default_rng(1)
        model = random_mlp([3, 5, 2], rng, scale=2.0)
        solver = FlipSolver(model, continuous_schema(3))
        report = build_report(solver, rng.normal(size=3))
        assert report.section_c is not None
        assert report.section_c.kind == "unconstrained"

    def test_scale_groups_swept(self):
        schema = FeatureSchema([
            Feature(name="m1", kind="continuous", scale_group="months"),
            Feature(name="m2", kind="continuous", scale_group="months"),
            Feature(name="p1", kind="continuous", scale_group="percent"),
        ])
        rng = np.random.default_rng(2)
        model = random_mlp([3, 4, 2], rng, scale=2.0)
        solver = FlipSolver(model, schema)
        report = build_report(solver, rng.normal(size=3),
                              ReportOptions(singles=False, unconstrained=False))
        kinds = {e.features for e in report.section_a} | \
                {e.features for e in report.section_b}
        assert ("m1", "m2") in kinds or ("m2", "m1") in kinds

    def test_custom_subsets_and_groups_off(self):
        rng = np.random.default_rng(3)
        model = random_mlp([4, 4, 2], rng, scale=2.0)
        solver = FlipSolver(model, continuous_schema(4))
        report = build_report(
            solver, rng.normal(size=4),
            ReportOptions(singles=False, groups=False, unconstrained=False,
                          custom_subsets=(("f0", "f3"),)))
        entries = report.section_a + report.section_b
        assert len(entries) == 1
        assert entries[0].features == ("f0", "f3")
        assert entries[0].kind == "custom"

    def test_solver_errors_recorded_not_raised(self):
        rng = np.random.default_rng(4)
        model = random_mlp([3, 4, 2], rng)
        solver = FlipSolver(model, continuous_schema(3))
        report = build_report(
            solver, rng.normal(size=3),
            ReportOptions(singles=False, groups=False, unconstrained=False,
                          custom_subsets=(("f0", "missing"),)))
        assert report.errors
        assert report.errors[0][0] == ("f0", "missing")


class TestRendering:
    def _report(self, seed=5):
        rng = np.random.default_rng(seed)
        model = random_mlp([3, 5, 2], rng, scale=2.0)
        solver = FlipSolver(model, continuous_schema(3, lower=-4.0, upper=4.0))
        report = build_report(solver, rng.normal(size=3), ReportOptions(pairs=True),
                              row_id=7)
        return report, solver

    def test_text_structure(self):
        report, solver = self._report()
        text = render_text(report, solver.schema, solver)
        assert "will NOT flip" in text
        assert "WILL flip" in text
        assert "Closest overall change" in text

    def test_empty_section_b_message(self):
        model, schema = single_feature_model(3, active=1)
        solver = FlipSolver(model, schema)
        # inert feature only: f0 free never flips
        report = build_report(solver, np.zeros(3),
                              ReportOptions(singles=False, groups=False,
                                            unconstrained=False,
                                            custom_subsets=(("f0",),)))
        text = render_text(report, schema, solver)
        assert "No single-feature, pair, or group change flips" in text

    def test_json_round_trip(self):
        report, solver = self._report()
        payload = render_json(report, solver)
        assert payload["report_version"] == 1
        back = parse_report_json(payload)
        assert render_json(back) == payload

    def test_json_serializable(self):
        report, solver = self._report()
        payload = render_json(report, solver)
        json.dumps(payload)  # must not raise

    def test_render_verification_catches_bad_candidate(self):
        report, solver = self._report()
        if not report.section_b:
            pytest.skip("no converged section-B entry for this draw")
        report.section_b[0].result.flip_point[:] += 10.0
        with pytest.raises(RuntimeError, match="re-verification"):
            render_text(report, solver.schema, solver)

    def test_changed_features_table(self):
        schema = FeatureSchema([
            Feature(name="v", kind="continuous", scale_weight=1.0),
            Feature(name="g=A", kind="binary", group="g", level="A"),
            Feature(name="g=B", kind="binary", group="g", level="B"),
        ])
        x = np.array([1.0, 1.0, 0.0])
        fp = np.array([2.5, 0.0, 1.0])
        rows = changed_features(schema, x, fp)
        assert {r["feature"] for r in rows} == {"v", "g"}
        cat = next(r for r in rows if r["feature"] == "g")
        assert cat["before"] == "A" and cat["after"] == "B"


class TestScaleGroups:
    def test_groups_from_schema(self):
        schema = FeatureSchema([
            Feature(name="a", kind="continuous", scale_group="months"),
            Feature(name="b", kind="continuous", scale_group="months"),
            Feature(name="c", kind="continuous"),
        ])
        groups = scale_groups_from_schema(schema)
        assert groups == [ScaleGroup("months", ("a", "b"))]


class TestLatency:
    def test_adult_scale_report_under_30s(self):
        rng = np.random.default_rng(6)
        model = random_mlp([88, 40, 32, 24, 20, 16, 14, 2], rng, scale=2.0)
        feats = []
        for i in range(88):
            feats.append(Feature(name=f"f{i}", kind="continuous",
                                 scale_group=f"grp{i % 5}"))
        schema = FeatureSchema(feats)
        solver = FlipSolver(model, schema)
        x = rng.normal(size=88)
        t0 = time.perf_counter()
        report = build_report(solver, x, ReportOptions(pairs=False))
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0
        assert report.section_c is not None or report.errors
