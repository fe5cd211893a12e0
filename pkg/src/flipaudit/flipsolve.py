"""Closest-flip-point solver.

A flip point of a two-class model is an input scoring exactly (1/2, 1/2);
the solver finds the flip point of minimal weighted distance from a given
input, optionally restricted to a subset of free features.

Strategy: work in a rescaled coordinate system u = sqrt(w) * (x_hat - x)
over the free continuous features, where the weighted distance is plain
Euclidean. Each free one-hot group is handled by exact enumeration of its
level assignments. For every assignment, minimize ||u||^2 + mu * gap(u)^2
over an increasing penalty schedule (projected gradient descent with
backtracking line search, several starts per problem), then pull the
iterate exactly onto the boundary by Newton steps along the gap gradient,
and finally slide it tangentially along the boundary until the distance is
stationary. The whole pipeline is vectorized over (problems x starts), so
dataset-wide sweeps run as a handful of batched model evaluations.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import CONTINUOUS, FeatureSchema
from .errors import SchemaError
from .model import MlpModel

CONVERGED = "converged"
NO_FLIP = "no-flip-exists"
MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class FlipConstraint:
    """Which features may move during a flip search.

    ``free`` lists continuous feature names, standalone binary names, and/or
    one-hot group names; ``None`` frees everything. One-hot groups are all
    or nothing: name the group, never an encoded member column.
    ``fixed_assignments`` pins non-free groups to a given level.
    """

    free: frozenset[str] | None = None
    enforce_integer: bool = False
    respect_bounds: bool = True
    fixed_assignments: tuple[tuple[str, str], ...] = ()

    @classmethod
    def unconstrained(cls, **kwargs) -> "FlipConstraint":
        return cls(free=None, **kwargs)

    @classmethod
    def only(cls, names, **kwargs) -> "FlipConstraint":
        return cls(free=frozenset(names), **kwargs)


@dataclass(frozen=True)
class FlipResult:
    """Outcome of one flip search."""

    status: str
    flip_point: np.ndarray | None
    distance: float
    direction: np.ndarray | None
    boundary_residual: float
    restarts_used: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "flip_point": None if self.flip_point is None else self.flip_point.tolist(),
            "distance": None if not math.isfinite(self.distance) else self.distance,
            "direction": None if self.direction is None else self.direction.tolist(),
            "residual": None if not math.isfinite(self.boundary_residual) else self.boundary_residual,
            "restarts_used": self.restarts_used,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "FlipResult":
        fp = payload.get("flip_point")
        dr = payload.get("direction")
        return cls(
            status=payload["status"],
            flip_point=None if fp is None else np.asarray(fp, dtype=np.float64),
            distance=payload["distance"] if payload.get("distance") is not None else math.inf,
            direction=None if dr is None else np.asarray(dr, dtype=np.float64),
            boundary_residual=payload["residual"] if payload.get("residual") is not None else math.inf,
            restarts_used=payload.get("restarts_used", 0),
        )


@dataclass
class SolverOptions:
    n_starts: int = 8
    seed: int = 0
    penalty_schedule: tuple[float, ...] = (1.0, 30.0, 1e3)
    inner_iterations: int = 80
    polish_iterations: int = 200
    max_iterations: int = 5000
    gap_tolerance: float = 4e-9      # |logit gap|; |z1 - 0.5| <= |gap| / 4
    step_tolerance: float = 1e-10
    tangent_tolerance: float = 1e-9
    unbounded_span: float = 10.0     # |delta_i| <= span / w_i when bounds are missing
    max_combinations: int = 10_000
    grid_samples: int = 100_001
    axis_scan_points: int = 129
    axis_scan_budget: int = 500_000  # max model evals spent on axis-scan starts
    max_integer_patterns: int = 256
    eval_chunk: int = 65_536


def _z_residual(gap):
    """|z1 - 0.5| from the logit gap, elementwise."""
    return np.abs(0.5 * np.tanh(np.asarray(gap) / 2.0))


class _Resolved:
    """A FlipConstraint resolved against a schema."""

    def __init__(self, schema: FeatureSchema, constraint: FlipConstraint):
        self.constraint = constraint
        names = set(constraint.free) if constraint.free is not None else None
        free_cont: list[int] = []
        free_groups: list[str] = []
        free_binaries: list[int] = []

        member_names = {f.name for f in schema.features if f.group is not None}
        if names is not None:
            for name in names:
                if name in member_names:
                    raise SchemaError(
                        f"'{name}' is a one-hot member column; free its group instead")
                if name not in schema.groups and not schema.has_feature(name):
                    raise SchemaError(f"unknown feature or group '{name}'")
            if not names:
                raise ValueError("free feature set must not be empty")

        for i, f in enumerate(schema.features):
            if f.group is not None:
                continue
            selected = names is None or f.name in names
            if not selected:
                continue
            if f.kind == CONTINUOUS:
                free_cont.append(i)
            else:
                free_binaries.append(i)
        for gid in schema.groups:
            if names is None or gid in names:
                free_groups.append(gid)

        fixed = dict(constraint.fixed_assignments)
        for gid, level in fixed.items():
            if gid not in schema.groups:
                raise SchemaError(f"fixed assignment names unknown group '{gid}'")
            if gid in free_groups:
                raise ValueError(f"group '{gid}' cannot be both free and fixed")
            if level not in {schema.features[i].level for i in schema.groups[gid]}:
                raise SchemaError(f"group '{gid}' has no level '{level}'")

        self.free_cont = np.array(free_cont, dtype=np.int64)
        self.free_groups = free_groups
        self.free_binaries = free_binaries
        self.fixed = fixed

    def n_assignments(self, schema: FeatureSchema) -> int:
        count = 1
        for gid in self.free_groups:
            count *= len(schema.groups[gid])
        count *= 2 ** len(self.free_binaries)
        return count

    def assignments(self, schema: FeatureSchema):
        """Yield (columns, values) pairs covering every discrete combination."""
        parts = []
        for gid in self.free_groups:
            members = schema.groups[gid]
            options = []
            for chosen in members:
                options.append((members, [1.0 if i == chosen else 0.0 for i in members]))
            parts.append(options)
        for idx in self.free_binaries:
            parts.append([([idx], [0.0]), ([idx], [1.0])])
        if not parts:
            yield [], []
            return
        for combo in itertools.product(*parts):
            cols: list[int] = []
            vals: list[float] = []
            for c, v in combo:
                cols.extend(c)
                vals.extend(v)
            yield cols, vals


class FlipSolver:
    """Computes flip points for one model/schema pair.

    The model and schema are immutable; a solver instance may be shared
    across threads.
    """

    def __init__(self, model: MlpModel, schema: FeatureSchema,
                 options: SolverOptions | None = None):
        if model.n_inputs != len(schema):
            raise SchemaError(
                f"model expects {model.n_inputs} inputs but schema has {len(schema)} features")
        if model.feature_schema_hash is not None and \
                model.feature_schema_hash != schema.schema_hash():
            raise SchemaError("model feature_schema_hash does not match this schema")
        self.model = model
        self.schema = schema
        self.options = options or SolverOptions()
        self.weights = schema.scale_weights()
        self.sqrt_w = np.sqrt(self.weights)
        lo, hi = schema.bounds_arrays()
        span = self.options.unbounded_span / self.weights
        self.lo = np.where(np.isfinite(lo), lo, -span)
        self.hi = np.where(np.isfinite(hi), hi, span)

    # -- scalar helpers ---------------------------------------------------

    def _gap_batch(self, points: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        step = self.options.eval_chunk
        for s in range(0, points.shape[0], step):
            out[s:s + step] = self.model.logit_gap(points[s:s + step])
        return out

    def residual_at(self, point) -> float:
        return float(_z_residual(self.model.logit_gap(np.atleast_2d(point)))[0])

    def _result(self, x, point, restarts: int) -> FlipResult:
        direction = point - x
        distance = float(np.sqrt(np.sum(self.weights * direction * direction)))
        return FlipResult(
            status=CONVERGED, flip_point=point, distance=distance,
            direction=direction, boundary_residual=self.residual_at(point),
            restarts_used=restarts)

    @staticmethod
    def _failure(status: str, restarts: int) -> FlipResult:
        return FlipResult(status=status, flip_point=None, distance=math.inf,
                          direction=None, boundary_residual=math.inf,
                          restarts_used=restarts)

    # -- core batched continuous solve ------------------------------------

    def _scatter(self, base, free_idx, u):
        points = base.copy()
        rows = np.arange(base.shape[0])[:, None]
        points[rows, free_idx] = base[rows, free_idx] + u / self.sqrt_w[free_idx]
        return points

    def _gap_grad_u(self, base, free_idx, u):
        points = self._scatter(base, free_idx, u)
        gap, grad = self.model.gap_and_gradient(points)
        rows = np.arange(base.shape[0])[:, None]
        return gap, grad[rows, free_idx] / self.sqrt_w[free_idx]

    def _u_box(self, base, free_idx, respect_bounds: bool):
        rows = np.arange(base.shape[0])[:, None]
        ref = base[rows, free_idx]
        sw = self.sqrt_w[free_idx]
        if respect_bounds:
            ulo = (self.lo[free_idx] - ref) * sw
            uhi = (self.hi[free_idx] - ref) * sw
        else:
            span = self.options.unbounded_span / self.weights[free_idx]
            ulo = -span * sw
            uhi = span * sw
        # the reference point itself must stay feasible
        return np.minimum(ulo, 0.0), np.maximum(uhi, 0.0)

    def _restore(self, base, free_idx, u, ulo, uhi, max_iter=30):
        """Newton steps along the gap gradient to land on gap = 0.

        Operates in place on a compacted batch; returns (u, feasible).
        """
        gtol = self.options.gap_tolerance
        n = u.shape[0]
        feasible = np.zeros(n, dtype=bool)
        active = np.arange(n)
        for _ in range(max_iter):
            gap, gu = self._gap_grad_u(base[active], free_idx[active], u[active])
            done = np.abs(gap) <= gtol
            feasible[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break
            gap, gu = gap[~done], gu[~done]
            denom = np.sum(gu * gu, axis=1) + 1e-300
            step = -(gap / denom)[:, None] * gu
            # damp very large moves so saturated regions cannot explode
            norms = np.linalg.norm(step, axis=1)
            limit = 0.5 * (1.0 + np.linalg.norm(u[active], axis=1))
            factor = np.where(norms > limit, limit / (norms + 1e-300), 1.0)
            u[active] = np.clip(u[active] + factor[:, None] * step,
                                ulo[active], uhi[active])
        return u, feasible

    def _penalty_descent(self, base, free_idx, u, ulo, uhi):
        """Minimize ||u||^2 + mu * gap^2 over an increasing penalty schedule
        by projected gradient descent: Barzilai-Borwein trial step with a
        backtracking safeguard. Stages only need to land in the right basin;
        restoration and polish supply the final precision."""
        opts = self.options
        n = u.shape[0]
        iters_left = np.full(n, opts.max_iterations)
        stage_tol = max(opts.step_tolerance, 1e-6)
        for mu in opts.penalty_schedule:
            active = np.arange(n)
            step_t = np.full(n, 0.25)
            prev_u = np.full_like(u, np.nan)
            prev_grad = np.zeros_like(u)
            for _ in range(opts.inner_iterations):
                if active.size == 0:
                    break
                ua, ba, fa = u[active], base[active], free_idx[active]
                la, ha = ulo[active], uhi[active]
                gap, gu = self._gap_grad_u(ba, fa, ua)
                f_val = np.sum(ua * ua, axis=1) + mu * gap * gap
                grad = 2.0 * ua + (2.0 * mu * gap)[:, None] * gu
                # Barzilai-Borwein step where history exists
                du = ua - prev_u[active]
                dg = grad - prev_grad[active]
                bb = np.abs(np.sum(du * dg, axis=1)) / (np.sum(dg * dg, axis=1) + 1e-300)
                ta = np.where(np.isfinite(bb) & (bb > 0.0),
                              np.clip(bb, 1e-8, 1e3), step_t[active])
                prev_u[active] = ua
                prev_grad[active] = grad
                accepted = np.zeros(active.size, dtype=bool)
                best = ua.copy()
                for _ in range(10):
                    pend = np.flatnonzero(~accepted)
                    if pend.size == 0:
                        break
                    cand = np.clip(ua[pend] - ta[pend, None] * grad[pend],
                                   la[pend], ha[pend])
                    gap_c = self._gap_batch(self._scatter(ba[pend], fa[pend], cand))
                    f_cand = np.sum(cand * cand, axis=1) + mu * gap_c * gap_c
                    decrease = np.sum((cand - ua[pend]) * grad[pend], axis=1)
                    ok = f_cand <= f_val[pend] + 1e-4 * decrease + 1e-15
                    best[pend[ok]] = cand[ok]
                    accepted[pend[ok]] = True
                    ta[pend[~ok]] *= 0.25
                step_t[active] = ta
                moved = np.linalg.norm(best - ua, axis=1)
                settled = ~accepted | (
                    moved <= stage_tol * (1.0 + np.linalg.norm(ua, axis=1)))
                u[active] = best
                iters_left[active] -= 1
                active = active[~settled & (iters_left[active] > 0)]
        return u, iters_left <= 0

    def _polish(self, base, free_idx, u, ulo, uhi, feasible):
        """Slide feasible points tangentially along the boundary while the
        distance keeps dropping.

        Predictor-corrector: a tangent step of length alpha plus a linearized
        boundary correction costs one batched model evaluation per iteration;
        points whose trial drifts off the boundary get a few Newton touch-ups.
        """
        opts = self.options
        gtol = opts.gap_tolerance
        n = u.shape[0]
        if not feasible.any():
            return u
        dist_best = np.sum(u * u, axis=1)
        gap_b = np.zeros(n)
        gu_b = np.zeros_like(u)
        idx0 = np.flatnonzero(feasible)
        gap_b[idx0], gu_b[idx0] = self._gap_grad_u(base[idx0], free_idx[idx0], u[idx0])
        alpha = np.full(n, 1.0)
        shrunk = np.zeros(n, dtype=np.int32)
        active = idx0
        for _ in range(opts.polish_iterations):
            if active.size == 0:
                break
            ub, gb, gub = u[active], gap_b[active], gu_b[active]
            denom = np.sum(gub * gub, axis=1) + 1e-300
            lam = np.sum(ub * gub, axis=1) / denom
            tau = ub - lam[:, None] * gub
            tnorm = np.linalg.norm(tau, axis=1)
            live = tnorm > opts.tangent_tolerance * (1.0 + np.linalg.norm(ub, axis=1))
            active = active[live]
            if active.size == 0:
                break
            ub, gb, gub, tau, denom = ub[live], gb[live], gub[live], tau[live], denom[live]
            trial = np.clip(ub - alpha[active, None] * tau, ulo[active], uhi[active])
            pred_gap = gb + np.sum(gub * (trial - ub), axis=1)
            trial = np.clip(trial - (pred_gap / denom)[:, None] * gub,
                            ulo[active], uhi[active])
            gap_t, gu_t = self._gap_grad_u(base[active], free_idx[active], trial)
            off = np.flatnonzero(np.abs(gap_t) > gtol)
            if off.size:
                sub = active[off]
                fixed, feas_n = self._restore(base[sub], free_idx[sub], trial[off],
                                              ulo[sub], uhi[sub], max_iter=6)
                trial[off] = fixed
                gap_n, gu_n = self._gap_grad_u(base[sub], free_idx[sub], fixed)
                gap_t[off], gu_t[off] = gap_n, gu_n
            feas_t = np.abs(gap_t) <= gtol
            dist_t = np.sum(trial * trial, axis=1)
            ok = feas_t & (dist_t < dist_best[active] - 1e-18)
            acc = active[ok]
            u[acc] = trial[ok]
            dist_best[acc] = dist_t[ok]
            gap_b[acc], gu_b[acc] = gap_t[ok], gu_t[ok]
            alpha[acc] = np.minimum(alpha[acc] * 1.3, 1.0)
            shrunk[acc] = 0
            rej = active[~ok]
            alpha[rej] *= 0.3
            shrunk[rej] += 1
            # give up on points that keep rejecting steps
            active = active[ok | (shrunk[active] < 12)]
        return u

    def _solve_batch(self, base, free_idx, u0, respect_bounds=True, use_penalty=True):
        """Full pipeline for a batch of independent problems (one row each).

        Returns (u, feasible, capped). With ``use_penalty=False`` the starts
        are assumed to sit near the boundary already (restore + polish only).
        """
        ulo, uhi = self._u_box(base, free_idx, respect_bounds)
        u = np.clip(u0, ulo, uhi)
        if use_penalty:
            u, capped = self._penalty_descent(base, free_idx, u, ulo, uhi)
        else:
            capped = np.zeros(u.shape[0], dtype=bool)
        u, feasible = self._restore(base, free_idx, u, ulo, uhi)
        u = self._polish(base, free_idx, u, ulo, uhi, feasible)
        return u, feasible, capped

    # -- axis-scan starts ---------------------------------------------------

    def _axis_starts(self, base, free_idx, ulo, uhi):
        """Coarse per-coordinate scans; boundary crossings become extra starts.

        ``base`` is a single problem (1, d); one batched model call covers all
        free coordinates.
        """
        opts = self.options
        nf = free_idx.shape[-1]
        g_pts = opts.axis_scan_points
        if nf * g_pts > opts.axis_scan_budget:
            return []
        ts = np.linspace(0.0, 1.0, g_pts)
        grids = ulo[0] + (uhi[0] - ulo[0]) * ts[:, None]   # (g_pts, nf)
        u_all = np.zeros((nf * g_pts, nf))
        for j in range(nf):
            u_all[j * g_pts:(j + 1) * g_pts, j] = grids[:, j]
        big_base = np.broadcast_to(base[0], (nf * g_pts, base.shape[1])).copy()
        big_fidx = np.broadcast_to(free_idx[:1], (nf * g_pts, nf))
        gaps = self._gap_batch(self._scatter(big_base, big_fidx, u_all)).reshape(nf, g_pts)

        starts = []
        for j in range(nf):
            g = gaps[j]
            sign_change = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
            for k in sign_change[:4]:
                u0 = np.zeros(nf)
                u0[j] = 0.5 * (grids[k, j] + grids[k + 1, j])
                starts.append(u0)
        return starts

    # -- public operations --------------------------------------------------

    def closest_flip(self, x, constraint: FlipConstraint | None = None) -> FlipResult:
        return self.closest_flip_batch(np.atleast_2d(np.asarray(x, dtype=np.float64)),
                                       constraint)[0]

    def closest_flip_batch(self, xs, constraint: FlipConstraint | None = None
                           ) -> list[FlipResult]:
        """Closest flip points for each row of ``xs`` under one constraint."""
        constraint = constraint or FlipConstraint.unconstrained()
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[1] != len(self.schema):
            raise ValueError(f"input width {xs.shape[1]} does not match schema ({len(self.schema)})")
        if not np.all(np.isfinite(xs)):
            raise ValueError("input contains non-finite entries")
        resolved = _Resolved(self.schema, constraint)
        n_assign = resolved.n_assignments(self.schema)
        if n_assign > self.options.max_combinations:
            raise ValueError(
                f"{n_assign} categorical combinations exceed the cap of "
                f"{self.options.max_combinations}; narrow the constraint")

        # Keep each internal batch (rows x starts x assignments) bounded.
        chunk = max(1, 16384 // (self.options.n_starts * max(n_assign, 1)))
        results: list[FlipResult] = []
        for s in range(0, xs.shape[0], chunk):
            results.extend(self._solve_rows(xs[s:s + chunk], resolved))
        if constraint.enforce_integer:
            results = [
                self.integerize(xs[i], results[i], constraint) if results[i].converged
                else results[i]
                for i in range(len(results))
            ]
        return results

    def _solve_rows(self, xs, resolved: _Resolved) -> list[FlipResult]:
        opts = self.options
        n_rows = xs.shape[0]
        free_idx = resolved.free_cont
        assignments = list(resolved.assignments(self.schema))

        # Base points: row value with fixed assignments applied.
        base_rows = xs.copy()
        for gid, level in resolved.fixed.items():
            members = self.schema.groups[gid]
            base_rows[:, members] = 0.0
            chosen = next(i for i in members if self.schema.features[i].level == level)
            base_rows[:, chosen] = 1.0

        best: list[FlipResult | None] = [None] * n_rows
        any_capped = np.zeros(n_rows, dtype=bool)
        restarts = opts.n_starts

        for cols, vals in assignments:
            bases = base_rows.copy()
            if cols:
                bases[:, cols] = vals

            if free_idx.size == 0:
                # Purely discrete subspace: a candidate is a flip point only
                # if it happens to land exactly on the boundary.
                resid = _z_residual(self._gap_batch(bases))
                for i in range(n_rows):
                    if resid[i] <= 1e-6:
                        cand = self._result(xs[i], bases[i], restarts)
                        if best[i] is None or cand.distance < best[i].distance:
                            best[i] = cand
                continue

            points, feasible, capped = self._solve_assignment(xs, bases, free_idx,
                                                              resolved)
            any_capped |= capped
            for i in range(n_rows):
                if feasible[i]:
                    cand = self._result(xs[i], points[i], restarts)
                    if best[i] is None or cand.distance < best[i].distance:
                        best[i] = cand

        out: list[FlipResult] = []
        for i in range(n_rows):
            if best[i] is not None:
                out.append(best[i])
            elif any_capped[i]:
                out.append(self._failure(MAX_ITERATIONS, restarts))
            else:
                out.append(self._failure(NO_FLIP, restarts))
        return out

    def _solve_assignment(self, xs, bases, free_idx, resolved: _Resolved):
        """Multi-start continuous solve; returns per-row best points."""
        opts = self.options
        n_rows, d = bases.shape
        nf = free_idx.size
        respect = resolved.constraint.respect_bounds
        fidx = np.broadcast_to(free_idx, (n_rows, nf))
        ulo1, uhi1 = self._u_box(bases, fidx, respect)

        starts: list[np.ndarray] = [np.zeros((n_rows, nf))]
        rng = np.random.default_rng(opts.seed)
        span = np.minimum(uhi1 - ulo1, 2.0 * opts.unbounded_span / self.sqrt_w[free_idx])
        sigmas = (0.05, 0.15, 0.4, 0.05, 0.15, 0.4, 0.8)
        for k in range(opts.n_starts - 1):
            sigma = sigmas[k % len(sigmas)]
            starts.append(rng.normal(0.0, 1.0, size=(n_rows, nf)) * sigma * span * 0.5)

        def run(u0_list, use_penalty):
            n_st = len(u0_list)
            bb = np.tile(bases, (n_st, 1))
            bf = np.broadcast_to(free_idx, (n_st * n_rows, nf))
            u, feas, capped = self._solve_batch(bb, bf, np.concatenate(u0_list),
                                                respect, use_penalty)
            pts = self._scatter(bb, bf, u).reshape(n_st, n_rows, d)
            return pts, feas.reshape(n_st, n_rows), capped.reshape(n_st, n_rows)

        pts, feas, caps = run(starts, True)

        # Axis-scan starts sit near the boundary already; they go straight to
        # restoration + polish. Only worthwhile per single row.
        if n_rows == 1:
            extra = self._axis_starts(bases, fidx, ulo1, uhi1)
            if extra:
                extra.sort(key=lambda v: float(np.sum(v * v)))
                extra = extra[:64]
                pts2, feas2, caps2 = run([e[None, :] for e in extra], False)
                pts = np.concatenate([pts, pts2])
                feas = np.concatenate([feas, feas2])
                caps = np.concatenate([caps, caps2])

        diffs = pts - xs[None, :, :]
        dist2 = np.sum(self.weights * diffs * diffs, axis=2)
        dist2 = np.where(feas, dist2, np.inf)
        winner = np.argmin(dist2, axis=0)
        rows = np.arange(n_rows)
        return pts[winner, rows], feas[winner, rows], caps.any(axis=0)

    def flip_1d(self, x, feature_name: str, samples: int | None = None) -> FlipResult:
        """Closest flip varying a single continuous feature, by dense scan,
        bracketing, and bisection.

        ``samples`` overrides the scan resolution (default
        ``options.grid_samples``); report sweeps use a coarser scan.
        """
        opts = self.options
        x = np.asarray(x, dtype=np.float64)
        if feature_name in self.schema.groups:
            raise ValueError(
                f"'{feature_name}' is categorical; discrete features are handled by enumeration")
        idx = self.schema.index_of(feature_name)
        feat = self.schema.features[idx]
        if feat.kind != CONTINUOUS:
            raise ValueError(
                f"'{feature_name}' is not continuous; discrete features are handled by enumeration")
        lo, hi = self.lo[idx], self.hi[idx]
        xi = float(np.clip(x[idx], lo, hi))

        if self.residual_at(x) <= 1e-9:
            return self._result(x, x.copy(), 1)

        ts = np.linspace(lo, hi, samples or opts.grid_samples)
        pts = np.broadcast_to(x, (ts.size, x.size)).copy()
        pts[:, idx] = ts
        gaps = self._gap_batch(pts)

        def gap_at(t: float) -> float:
            p = x.copy()
            p[idx] = t
            return float(self.model.logit_gap(p[None, :])[0])

        exact = np.flatnonzero(gaps == 0.0)
        crossings = np.flatnonzero(np.sign(gaps[:-1]) * np.sign(gaps[1:]) < 0)
        if exact.size == 0 and crossings.size == 0:
            return self._failure(NO_FLIP, 1)

        # Refine the nearest crossing bracket on each side of x_i by bisection.
        xtol = 1e-9 * (hi - lo)
        candidates = [float(ts[k]) for k in exact]
        if crossings.size:
            mids = 0.5 * (ts[crossings] + ts[crossings + 1])
            picks = []
            left = np.flatnonzero(mids <= xi)
            right = np.flatnonzero(mids > xi)
            if left.size:
                picks.append(int(crossings[left[np.argmax(mids[left])]]))
            if right.size:
                picks.append(int(crossings[right[np.argmin(mids[right])]]))
            for k in picks:
                a, b = float(ts[k]), float(ts[k + 1])
                fa = float(gaps[k])
                while b - a > xtol:
                    m = 0.5 * (a + b)
                    fm = gap_at(m)
                    if fm == 0.0:
                        a = b = m
                        break
                    if math.copysign(1.0, fm) == math.copysign(1.0, fa):
                        a, fa = m, fm
                    else:
                        b = m
                candidates.append(0.5 * (a + b))

        t_best = min(candidates, key=lambda t: abs(t - xi))
        point = x.copy()
        point[idx] = t_best
        return self._result(x, point, 1)

    def flip_pairs_sweep(self, x, feature_names=None) -> dict[tuple[str, str], FlipResult]:
        """closest_flip for every unordered pair of continuous features."""
        names = feature_names or self.schema.continuous_names()
        out: dict[tuple[str, str], FlipResult] = {}
        for a, b in itertools.combinations(names, 2):
            out[(a, b)] = self.closest_flip(x, FlipConstraint.only([a, b]))
        return out

    # -- integer mode ---------------------------------------------------------

    def integerize(self, x, relaxed: FlipResult,
                   constraint: FlipConstraint | None = None) -> FlipResult:
        """Round integer-flagged free features to nearby integers and re-polish
        the remaining continuous coordinates."""
        opts = self.options
        constraint = constraint or FlipConstraint.unconstrained()
        if not relaxed.converged:
            raise ValueError("integerize requires a converged relaxed result")
        x = np.asarray(x, dtype=np.float64)
        resolved = _Resolved(self.schema, replace(constraint, fixed_assignments=()))
        int_idx = [i for i in resolved.free_cont if self.schema.features[i].integer]
        if not int_idx:
            return relaxed
        relaxed_vals = relaxed.flip_point[int_idx]
        if np.allclose(relaxed_vals, np.round(relaxed_vals), atol=1e-9):
            return relaxed

        # Candidate integers within +-2 of the relaxed value, inside bounds.
        cand_lists: list[np.ndarray] = []
        for pos, i in enumerate(int_idx):
            v = relaxed_vals[pos]
            ints = np.arange(math.ceil(v - 2.0), math.floor(v + 2.0) + 1, dtype=np.float64)
            ints = ints[(ints >= self.lo[i]) & (ints <= self.hi[i])]
            if ints.size == 0:
                ints = np.array([np.clip(np.round(v), self.lo[i], self.hi[i])])
            order = np.argsort(np.abs(ints - x[i]))
            cand_lists.append(ints[order])

        free_cont = [i for i in resolved.free_cont if not self.schema.features[i].integer]
        w = self.weights
        best: FlipResult | None = None

        def pattern_cost(state: tuple[int, ...]) -> float:
            return sum(w[i] * (cand_lists[p][s] - x[i]) ** 2
                       for p, (i, s) in enumerate(zip(int_idx, state)))

        start = tuple([0] * len(int_idx))
        heap = [(pattern_cost(start), start)]
        seen = {start}
        evaluated = 0
        while heap and evaluated < opts.max_integer_patterns:
            _, state = heapq.heappop(heap)
            evaluated += 1
            fixed_point = relaxed.flip_point.copy()
            fixed_point[int_idx] = [cand_lists[p][s] for p, s in enumerate(state)]

            if free_cont:
                base = fixed_point.copy()
                base[free_cont] = x[free_cont]  # distance is still measured from x
                cand = self._integer_polish(x, base, np.array(free_cont), constraint)
            else:
                resid = self.residual_at(fixed_point)
                cand = self._result(x, fixed_point, 1) if resid <= 1e-6 else None
            if cand is not None and cand.converged:
                if best is None or cand.distance < best.distance:
                    best = cand
            for p in range(len(int_idx)):
                if state[p] + 1 < cand_lists[p].size:
                    nxt = state[:p] + (state[p] + 1,) + state[p + 1:]
                    if nxt not in seen:
                        seen.add(nxt)
                        heapq.heappush(heap, (pattern_cost(nxt), nxt))
            if best is not None and heap and heap[0][0] > best.distance ** 2:
                break
        if best is None:
            return self._failure(NO_FLIP, evaluated)
        return best

    def _integer_polish(self, x, base, free_idx, constraint) -> FlipResult | None:
        n_rows = 1
        nf = free_idx.size
        fidx = np.broadcast_to(free_idx, (n_rows, nf))
        bases = base[None, :]
        ulo, uhi = self._u_box(bases, fidx, constraint.respect_bounds)
        # warm start at x plus a few perturbations
        rng = np.random.default_rng(self.options.seed + 1)
        u0s = [np.zeros((1, nf))]
        for sigma in (0.1, 0.4):
            u0s.append(rng.normal(0.0, sigma, size=(1, nf)) * (uhi - ulo) * 0.25)
        big_base = np.tile(bases, (len(u0s), 1))
        big_fidx = np.broadcast_to(free_idx, (len(u0s), nf))
        u, feasible, _ = self._solve_batch(big_base, big_fidx, np.concatenate(u0s),
                                           respect_bounds=constraint.respect_bounds)
        if not feasible.any():
            return None
        points = self._scatter(big_base, big_fidx, u)
        diffs = points - x[None, :]
        dist2 = np.where(feasible, np.sum(self.weights * diffs * diffs, axis=1), np.inf)
        return self._result(x, points[int(np.argmin(dist2))], len(u0s))
