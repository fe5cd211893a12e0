"""Closest-flip solver: oracles, constraints, bisection, and integer mode."""

import itertools
import time

import numpy as np
import pytest

from flipaudit.data import Feature, FeatureSchema
from flipaudit.errors import SchemaError
from flipaudit.flipsolve import (
    CONVERGED,
    NO_FLIP,
    FlipConstraint,
    FlipResult,
    FlipSolver,
    SolverOptions,
)
from flipaudit.model import MlpModel

from conftest import continuous_schema, hyperplane_projection, linear_model, random_mlp


def categorical_schema() -> FeatureSchema:
    """Two continuous features, one 3-level group, one standalone binary."""
    return FeatureSchema([
        Feature(name="a", kind="continuous", scale_weight=1.0),
        Feature(name="b", kind="continuous", scale_weight=1.0),
        Feature(name="c=x", kind="binary", group="c", level="x"),
        Feature(name="c=y", kind="binary", group="c", level="y"),
        Feature(name="c=z", kind="binary", group="c", level="z"),
        Feature(name="flag", kind="binary"),
    ])


class TestClosestFlipLinear:
    def test_point_on_boundary_is_fixed(self):
        a = np.array([1.0, -2.0, 0.5])
        m = linear_model(a, 0.0)
        x = np.array([2.0, 1.0, 0.0])  # a.x = 0
        res = FlipSolver(m, continuous_schema(3)).closest_flip(x)
        assert res.status == CONVERGED
        assert res.distance == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(res.flip_point, x, atol=1e-9)

    @pytest.mark.parametrize("seed", range(15))
    def test_projection_oracle(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 8))
        a = rng.normal(size=d)
        c = float(rng.normal())
        m = linear_model(a, c)
        x = rng.normal(size=d)
        proj = hyperplane_projection(x, a, c)
        expected = np.linalg.norm(proj - x)
        res = FlipSolver(m, continuous_schema(d)).closest_flip(x)
        assert res.status == CONVERGED
        assert res.distance == pytest.approx(expected, rel=1e-6, abs=1e-12)

    def test_weighted_projection_oracle(self):
        rng = np.random.default_rng(42)
        d = 4
        weights = np.array([0.5, 2.0, 1.0, 4.0])
        schema = FeatureSchema([
            Feature(name=f"f{i}", kind="continuous", scale_weight=weights[i])
            for i in range(d)
        ])
        a = rng.normal(size=d)
        c = 0.3
        x = rng.normal(size=d)
        proj = hyperplane_projection(x, a, c, weights)
        expected = np.sqrt(np.sum(weights * (proj - x) ** 2))
        res = FlipSolver(linear_model(a, c), schema).closest_flip(x)
        assert res.distance == pytest.approx(expected, rel=1e-6)

    def test_distance_is_weighted_norm_of_direction(self):
        rng = np.random.default_rng(1)
        m = linear_model(rng.normal(size=3), 0.2)
        res = FlipSolver(m, continuous_schema(3)).closest_flip(rng.normal(size=3))
        assert res.distance == pytest.approx(
            np.linalg.norm(res.direction), abs=1e-12)


class TestConstraints:
    def test_empty_free_set_rejected(self):
        m = linear_model(np.array([1.0, 1.0]), 0.0)
        solver = FlipSolver(m, continuous_schema(2))
        with pytest.raises(ValueError):
            solver.closest_flip(np.zeros(2), FlipConstraint.only([]))

    def test_unknown_feature_rejected(self):
        m = linear_model(np.array([1.0, 1.0]), 0.0)
        solver = FlipSolver(m, continuous_schema(2))
        with pytest.raises(SchemaError):
            solver.closest_flip(np.zeros(2), FlipConstraint.only(["nope"]))

    def test_member_column_rejected(self):
        rng = np.random.default_rng(2)
        schema = categorical_schema()
        m = random_mlp([6, 4, 2], rng)
        solver = FlipSolver(m, schema)
        with pytest.raises(SchemaError, match="group"):
            solver.closest_flip(np.array([0, 0, 1, 0, 0, 0.0]),
                                FlipConstraint.only(["c=x"]))

    def test_constrained_flip_keeps_fixed_coordinates(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=4)
        m = linear_model(a, 0.1)
        solver = FlipSolver(m, continuous_schema(4))
        x = rng.normal(size=4)
        res = solver.closest_flip(x, FlipConstraint.only(["f1", "f3"]))
        if res.status == CONVERGED:
            assert res.flip_point[0] == pytest.approx(x[0], abs=1e-12)
            assert res.flip_point[2] == pytest.approx(x[2], abs=1e-12)

    def test_one_hot_feasibility(self):
        rng = np.random.default_rng(4)
        schema = categorical_schema()
        m = random_mlp([6, 6, 2], rng, scale=2.0)
        solver = FlipSolver(m, schema)
        x = np.array([0.2, -0.4, 1.0, 0.0, 0.0, 1.0])
        res = solver.closest_flip(x)
        if res.status == CONVERGED:
            group = res.flip_point[2:5]
            assert np.all(np.isin(group, (0.0, 1.0))) and group.sum() == 1.0
            assert res.flip_point[5] in (0.0, 1.0)

    def test_fixed_assignment_pins_group(self):
        rng = np.random.default_rng(5)
        schema = categorical_schema()
        m = random_mlp([6, 6, 2], rng, scale=2.0)
        solver = FlipSolver(m, schema)
        x = np.array([0.2, -0.4, 1.0, 0.0, 0.0, 1.0])
        res = solver.closest_flip(
            x, FlipConstraint(free=frozenset(["a", "b"]),
                              fixed_assignments=(("c", "z"),)))
        if res.status == CONVERGED:
            assert res.flip_point[4] == 1.0  # c=z active
            assert res.flip_point[2] == 0.0 and res.flip_point[3] == 0.0

    def test_bounds_respected(self):
        a = np.array([1.0, 0.0])
        m = linear_model(a, -5.0)  # boundary at f0 = 5
        schema = FeatureSchema([
            Feature(name="f0", kind="continuous", lower=-1.0, upper=1.0),
            Feature(name="f1", kind="continuous", lower=-1.0, upper=1.0),
        ])
        res = FlipSolver(m, schema).closest_flip(np.zeros(2))
        assert res.status == NO_FLIP

    def test_combination_cap(self):
        rng = np.random.default_rng(6)
        feats = [Feature(name="v", kind="continuous")]
        for g in range(5):
            for lvl in range(8):
                feats.append(Feature(name=f"g{g}={lvl}", kind="binary",
                                     group=f"g{g}", level=str(lvl)))
        schema = FeatureSchema(feats)
        m = random_mlp([41, 4, 2], rng)
        solver = FlipSolver(m, schema, SolverOptions(max_combinations=10_000))
        x = np.zeros(41)
        x[[1, 9, 17, 25, 33]] = 1.0
        with pytest.raises(ValueError, match="combinations"):
            solver.closest_flip(x)  # 8^5 = 32768 > 10000


class TestFlip1d:
    def test_inert_feature_has_no_flip(self):
        # model reads only f1; f0 cannot flip anything
        m = linear_model(np.array([0.0, 1.0]), 0.4)
        schema = continuous_schema(2, lower=-50.0, upper=50.0)
        res = FlipSolver(m, schema).flip_1d(np.array([0.0, 0.0]), "f0")
        assert res.status == NO_FLIP

    def test_categorical_rejected(self):
        rng = np.random.default_rng(7)
        solver = FlipSolver(random_mlp([6, 4, 2], rng), categorical_schema())
        with pytest.raises(ValueError):
            solver.flip_1d(np.array([0, 0, 1, 0, 0, 0.0]), "c")

    @pytest.mark.parametrize("seed", range(10))
    def test_grid_scan_oracle(self, seed):
        rng = np.random.default_rng(200 + seed)
        d = 3
        m = random_mlp([d, 6, 5, 2], rng, scale=2.0)
        schema = continuous_schema(d, lower=-4.0, upper=4.0)
        solver = FlipSolver(m, schema)
        x = rng.uniform(-2, 2, size=d)
        feature = f"f{rng.integers(0, d)}"
        res = solver.flip_1d(x, feature)

        # independent oracle: scan 100000 points, first sign change nearest x
        j = schema.index_of(feature)
        ts = np.linspace(-4.0, 4.0, 100_000)
        pts = np.tile(x, (ts.size, 1))
        pts[:, j] = ts
        gap = m.logit_gap(pts)
        cross = np.flatnonzero(np.sign(gap[:-1]) * np.sign(gap[1:]) < 0)
        if cross.size == 0:
            assert res.status == NO_FLIP
        else:
            mids = 0.5 * (ts[cross] + ts[cross + 1])
            nearest = mids[np.argmin(np.abs(mids - x[j]))]
            grid_step = ts[1] - ts[0]
            assert res.status == CONVERGED
            assert abs(res.flip_point[j] - nearest) <= grid_step

    def test_boundary_start_returns_zero(self):
        m = linear_model(np.array([1.0, 0.0]), 0.0)
        schema = continuous_schema(2, lower=-5.0, upper=5.0)
        res = FlipSolver(m, schema).flip_1d(np.array([0.0, 3.0]), "f0")
        assert res.status == CONVERGED and res.distance == pytest.approx(0.0, abs=1e-9)


class TestPairsSweep:
    def test_pair_count(self):
        rng = np.random.default_rng(8)
        d = 5
        m = random_mlp([d, 4, 2], rng)
        solver = FlipSolver(m, continuous_schema(d))
        out = solver.flip_pairs_sweep(rng.normal(size=d))
        assert len(out) == 10  # C(5,2)

    def test_pair_distance_at_least_unconstrained(self):
        rng = np.random.default_rng(9)
        d = 4
        m = random_mlp([d, 6, 2], rng, scale=2.0)
        solver = FlipSolver(m, continuous_schema(d))
        x = rng.normal(size=d)
        full = solver.closest_flip(x)
        if full.status != CONVERGED:
            pytest.skip("no unconstrained flip for this draw")
        for res in solver.flip_pairs_sweep(x).values():
            if res.status == CONVERGED:
                assert res.distance >= full.distance - 1e-8


class TestSubspaceMonotonicity:
    @pytest.mark.parametrize("seed", range(6))
    def test_single_pair_full_chain(self, seed):
        rng = np.random.default_rng(300 + seed)
        d = 4
        m = random_mlp([d, 6, 5, 2], rng, scale=2.0)
        solver = FlipSolver(m, continuous_schema(d))
        x = rng.normal(size=d)
        full = solver.closest_flip(x)
        if full.status != CONVERGED:
            pytest.skip("no unconstrained flip for this draw")
        singles = {name: solver.closest_flip(x, FlipConstraint.only([name]))
                   for name in (f"f{i}" for i in range(d))}
        for pair in itertools.combinations([f"f{i}" for i in range(d)], 2):
            rp = solver.closest_flip(x, FlipConstraint.only(list(pair)))
            if rp.status != CONVERGED:
                continue
            assert full.distance <= rp.distance + 1e-8
            for name in pair:
                if singles[name].status == CONVERGED:
                    assert rp.distance <= singles[name].distance + 1e-8


class TestBoundaryResidual:
    @pytest.mark.parametrize("seed", range(8))
    def test_residual_within_tolerance(self, seed):
        rng = np.random.default_rng(400 + seed)
        d = int(rng.integers(2, 7))
        m = random_mlp([d, 5, 4, 2], rng, scale=2.0)
        solver = FlipSolver(m, continuous_schema(d))
        res = solver.closest_flip(rng.normal(size=d))
        if res.status == CONVERGED:
            assert res.boundary_residual <= 1e-6
            z = m.forward(res.flip_point)
            assert abs(z.z1 - 0.5) <= 1e-6


class TestIntegerMode:
    def _integer_schema(self):
        return FeatureSchema([
            Feature(name="n", kind="continuous", integer=True, scale_weight=1.0),
            Feature(name="t", kind="continuous", scale_weight=1.0),
        ])

    def test_already_integral_returned_unchanged(self):
        m = linear_model(np.array([0.0, 1.0]), 0.0)  # boundary: t = 0
        solver = FlipSolver(m, self._integer_schema())
        x = np.array([3.0, 1.5])
        relaxed = solver.closest_flip(x)
        assert relaxed.status == CONVERGED
        out = solver.integerize(x, relaxed)
        assert out is relaxed  # n never moved, already integral

    def test_rounding_with_continuous_polish(self):
        # boundary: n + t = 4.6; from x = (0, 0) the relaxed flip is (2.3, 2.3)
        m = linear_model(np.array([1.0, 1.0]), -4.6)
        solver = FlipSolver(m, self._integer_schema())
        x = np.zeros(2)
        relaxed = solver.closest_flip(x)
        assert relaxed.flip_point[0] == pytest.approx(2.3, abs=1e-6)
        out = solver.integerize(x, relaxed)
        assert out.status == CONVERGED
        n_val = out.flip_point[0]
        assert n_val == np.round(n_val)
        assert abs(n_val - 2.3) <= 2.0
        # independent enumeration oracle over the +-2 integer candidates
        best = min(
            (np.hypot(k - x[0], (4.6 - k) - x[1]) for k in (1.0, 2.0, 3.0, 4.0)),
        )
        assert out.distance == pytest.approx(best, rel=1e-6)
        assert out.boundary_residual <= 1e-6

    def test_constraint_flag_runs_integerize(self):
        m = linear_model(np.array([1.0, 1.0]), -4.6)
        solver = FlipSolver(m, self._integer_schema())
        res = solver.closest_flip(np.zeros(2),
                                  FlipConstraint.unconstrained(enforce_integer=True))
        assert res.status == CONVERGED
        assert res.flip_point[0] == np.round(res.flip_point[0])

    def test_requires_converged_relaxed(self):
        m = linear_model(np.array([1.0, 1.0]), -4.6)
        solver = FlipSolver(m, self._integer_schema())
        bad = FlipResult(status=NO_FLIP, flip_point=None, distance=np.inf,
                         direction=None, boundary_residual=np.inf)
        with pytest.raises(ValueError):
            solver.integerize(np.zeros(2), bad)


class TestBatchAndSerialization:
    def test_batch_matches_single(self):
        rng = np.random.default_rng(10)
        d = 3
        m = random_mlp([d, 5, 2], rng, scale=2.0)
        solver = FlipSolver(m, continuous_schema(d))
        xs = rng.normal(size=(6, d))
        batch = solver.closest_flip_batch(xs)
        for i, x in enumerate(xs):
            single = solver.closest_flip(x)
            assert batch[i].status == single.status
            if single.status == CONVERGED:
                # axis-scan starts only run in the single path, which can
                # only improve the distance
                assert single.distance <= batch[i].distance + 1e-8

    def test_json_round_trip(self):
        rng = np.random.default_rng(11)
        m = linear_model(rng.normal(size=3), 0.1)
        solver = FlipSolver(m, continuous_schema(3))
        res = solver.closest_flip(rng.normal(size=3))
        payload = res.to_json_dict()
        back = FlipResult.from_json_dict(payload)
        assert back.status == res.status
        assert np.allclose(back.flip_point, res.flip_point)
        assert back.distance == pytest.approx(res.distance)

    def test_no_flip_json(self):
        res = FlipResult(status=NO_FLIP, flip_point=None, distance=np.inf,
                         direction=None, boundary_residual=np.inf)
        payload = res.to_json_dict()
        assert payload["flip_point"] is None and payload["distance"] is None
        back = FlipResult.from_json_dict(payload)
        assert back.status == NO_FLIP and not back.converged


class TestThroughput:
    def test_adult_scale_under_one_second(self):
        rng = np.random.default_rng(12)
        m = random_mlp([88, 40, 32, 24, 20, 16, 14, 2], rng, scale=2.0)
        solver = FlipSolver(m, continuous_schema(88))
        x = rng.normal(size=88)
        solver.closest_flip(x)  # warm-up
        t0 = time.perf_counter()
        res = solver.closest_flip(rng.normal(size=88))
        elapsed = time.perf_counter() - t0
        assert res.status == CONVERGED
        assert elapsed < 1.0
