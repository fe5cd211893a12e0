"""Command-line interface.

Subcommands: train, explain, audit, swap-audit, rank-redundant, debias.
Data artifacts go to files or stdout; progress and timing go to stderr.
Exit status is 0 only when the requested artifact was fully written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import audit as audit_mod
from . import linalg
from .data import GroupFilter, drop_features, load_csv, split
from .debias import AugmentationPlan, augment_and_retrain, select_counteracting_flips
from .errors import FlipAuditError
from .explain import ReportOptions, build_report, render_json, render_text
from .flipsolve import FlipConstraint, FlipSolver, SolverOptions
from .model import TrainConfig, accuracy, load_model, save_model, train_model


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--schema", required=True, help="schema JSON file")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for flip sweeps")


def _parse_constraint(text: str | None, integer: bool = False) -> FlipConstraint:
    if text is None or text.strip() == "all":
        return FlipConstraint.unconstrained(enforce_integer=integer)
    names = [t.strip() for t in text.split(",") if t.strip()]
    return FlipConstraint.only(names, enforce_integer=integer)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flipaudit",
        description="Audit, explain, and debug a small classifier via decision-boundary flip points.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write it as JSON")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--layers", required=True,
                   help="comma-separated hidden layer sizes, e.g. 14,9,8,8,7")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--drop", default=None,
                   help="comma-separated features/groups to drop before training")

    p = sub.add_parser("explain", help="explanation report for one input row")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, required=True, help="0-based row index")
    p.add_argument("--out", default=None, help="basename for .txt/.json report files")
    p.add_argument("--pairs", action="store_true", help="include the pairwise sweep")
    p.add_argument("--no-groups", action="store_true", help="skip scale-group sweeps")
    p.add_argument("--no-singles", action="store_true", help="skip single-feature sweeps")
    p.add_argument("--integer", action="store_true", help="integer mode for flip points")
    p.add_argument("--subset", action="append", default=[],
                   help="custom free-feature subset (comma-separated); repeatable")
    p.add_argument("--constraint", default=None,
                   help="free features for the overall flip ('all' or names)")

    p = sub.add_parser("audit", help="group-level influence/PCA/frequency audit")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.add_argument("--filter", default=None, help="group filter, e.g. gender=Female,age<35")
    p.add_argument("--constraint", default=None, help="free features ('all' or names)")
    p.add_argument("--predicted-class", type=int, choices=(0, 1), default=None)
    p.add_argument("--correctness", choices=("correct", "incorrect"), default=None)
    p.add_argument("--sample", type=int, default=None, help="subsample rows for speed")
    p.add_argument("--threshold", type=float, default=1e-3,
                   help="changed-feature threshold in scaled units")

    p = sub.add_parser("swap-audit", help="binary-feature swap audit")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--feature", required=True, help="binary feature or 2-level group")
    p.add_argument("--out", default=None)
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--constraint", default=None)

    p = sub.add_parser("rank-redundant", help="pivoted-QR feature ordering and condition numbers")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--out", default=None)
    p.add_argument("--max-drop", type=int, default=5,
                   help="report condition numbers after dropping up to this many trailing features")
    p.add_argument("--tol", type=float, default=1e-8, help="numerical-rank tolerance")

    p = sub.add_parser("debias", help="augment with counteracting flip points and retrain")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", required=True, help="baseline model JSON")
    p.add_argument("--feature", required=True, help="continuous feature under repair")
    p.add_argument("--labeling", choices=("same-label", "flip-label"), default="same-label")
    p.add_argument("--layers", required=True, help="hidden layer sizes for the retrain")
    p.add_argument("--out", required=True, help="comparison bundle JSON path")
    p.add_argument("--out-model", default=None, help="where to write the retrained model")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--sample", type=int, default=None,
                   help="subsample size for the before/after audits")
    return parser


def _load_pair(args):
    dataset = load_csv(args.data, args.schema)
    model = load_model(args.model)
    if model.feature_schema_hash is not None and \
            model.feature_schema_hash != dataset.schema.schema_hash():
        raise FlipAuditError("model was trained against a different schema (hash mismatch)")
    return dataset, model


def _solver(model, schema, args) -> FlipSolver:
    return FlipSolver(model, schema, SolverOptions(seed=args.seed))


def _layer_sizes(arg: str, n_inputs: int) -> list[int]:
    hidden = [int(t) for t in arg.split(",") if t.strip()]
    return [n_inputs] + hidden + [2]


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _cmd_train(args) -> int:
    dataset = load_csv(args.data, args.schema)
    if args.drop:
        dataset = drop_features(dataset, [t.strip() for t in args.drop.split(",")])
    train_set, test_set = split(dataset, args.test_fraction, args.seed)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.learning_rate, seed=args.seed,
                         l2_penalty=args.l2)
    sizes = _layer_sizes(args.layers, len(dataset.schema))
    t0 = time.perf_counter()
    model, losses = train_model(train_set.x, train_set.labels, sizes, config,
                                feature_schema_hash=dataset.schema.schema_hash())
    _log(f"trained {sizes} in {time.perf_counter() - t0:.1f}s "
         f"(loss {losses[0]:.4f} -> {losses[-1]:.4f})")
    save_model(model, args.out)
    train_acc = accuracy(model, train_set.x, train_set.hard_labels())
    test_acc = accuracy(model, test_set.x, test_set.hard_labels())
    print(f"train_accuracy={train_acc:.4f} test_accuracy={test_acc:.4f}")
    return 0


def _cmd_explain(args) -> int:
    dataset, model = _load_pair(args)
    if not (0 <= args.index < dataset.n_rows):
        raise FlipAuditError(f"--index {args.index} out of range (0..{dataset.n_rows - 1})")
    solver = _solver(model, dataset.schema, args)
    options = ReportOptions(
        singles=not args.no_singles,
        pairs=args.pairs,
        groups=not args.no_groups,
        integer_mode=args.integer,
        custom_subsets=tuple(tuple(t.strip() for t in s.split(",") if t.strip())
                             for s in args.subset),
    )
    report = build_report(solver, dataset.x[args.index], options,
                          row_id=int(dataset.row_ids[args.index]))
    text = render_text(report, dataset.schema, solver, options)
    payload = render_json(report, solver)
    if args.out is None:
        print(text, end="")
        _log("(pass --out BASE to also write BASE.txt / BASE.json)")
    else:
        with open(args.out + ".txt", "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_json(payload, args.out + ".json")
        _log(f"wrote {args.out}.txt and {args.out}.json")
    return 0


def _cmd_audit(args) -> int:
    dataset, model = _load_pair(args)
    if args.filter:
        mask = GroupFilter.parse(args.filter).mask(dataset)
        dataset = dataset.subset(np.flatnonzero(mask))
        _log(f"filter matches {dataset.n_rows} rows")
    solver = _solver(model, dataset.schema, args)
    correctness = None if args.correctness is None else args.correctness == "correct"
    t0 = time.perf_counter()
    dirs = audit_mod.build_directions(
        solver, dataset, _parse_constraint(args.constraint),
        predicted_class=args.predicted_class, correctness=correctness,
        sample=args.sample, seed=args.seed, threads=args.threads)
    _log(f"computed {dirs.n_rows} flip directions in {time.perf_counter() - t0:.1f}s "
         f"(coverage {dirs.coverage:.1%})")
    payload = audit_mod.audit_report_json(dirs, dataset.schema, args.threshold)
    _write_json(payload, args.out)
    if args.out:
        print(audit_mod.audit_report_text(payload), end="")
    return 0


def _cmd_swap_audit(args) -> int:
    dataset, model = _load_pair(args)
    solver = _solver(model, dataset.schema, args)
    report = audit_mod.swap_binary_audit(
        solver, dataset, args.feature, _parse_constraint(args.constraint),
        sample=args.sample, seed=args.seed)
    _write_json(report.to_json_dict(), args.out)
    _log(f"{report.n_changed}/{report.n_rows} classifications changed; "
         f"mean distance change {report.mean_distance_change:+.4g}")
    return 0


def _cmd_rank_redundant(args) -> int:
    dataset = load_csv(args.data, args.schema)
    qr = linalg.pivoted_qr(dataset.x)
    names = dataset.schema.names
    order = [names[j] for j in qr.permutation]
    cond_full = linalg.condition_number(dataset.x)
    trailing = []
    for k in range(1, min(args.max_drop, len(names) - 1) + 1):
        kept = sorted(qr.permutation[:-k])
        cond_k = linalg.condition_number(dataset.x[:, kept])
        trailing.append({"dropped": order[-k:], "condition_number": cond_k})
    payload = {
        "pivot_order": order,
        "diag_magnitudes": qr.diag_magnitudes.tolist(),
        "numerical_rank": linalg.rank_from_qr(qr, args.tol),
        "condition_number": None if not np.isfinite(cond_full) else cond_full,
        "after_dropping": [
            {"dropped": t["dropped"],
             "condition_number": None if not np.isfinite(t["condition_number"])
             else t["condition_number"]}
            for t in trailing],
    }
    _write_json(payload, args.out)
    cond_text = f"{cond_full:.4g}" if np.isfinite(cond_full) else "inf"
    _log(f"condition number {cond_text}; most dependent: {', '.join(order[-3:][::-1])}")
    return 0


def _cmd_debias(args) -> int:
    dataset, model = _load_pair(args)
    train_set, test_set = split(dataset, args.test_fraction, args.seed)
    solver = _solver(model, dataset.schema, args)
    plan = AugmentationPlan(feature=args.feature, labeling=args.labeling)
    t0 = time.perf_counter()
    aug = select_counteracting_flips(solver, train_set, plan, sample=args.sample,
                                     seed=args.seed)
    _log(f"selected {aug.n_rows} counteracting flip points in {time.perf_counter() - t0:.1f}s")
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.learning_rate, seed=args.seed,
                         l2_penalty=args.l2)
    sizes = _layer_sizes(args.layers, len(dataset.schema))
    new_model, bundle = augment_and_retrain(
        model, train_set, aug, plan, sizes, config, test_dataset=test_set,
        solver_options=SolverOptions(seed=args.seed), audit_sample=args.sample,
        seed=args.seed)
    _write_json(bundle.to_json_dict(), args.out)
    if args.out_model:
        save_model(new_model, args.out_model)
    before_rank = bundle.before.rank_of(args.feature)
    after_rank = bundle.after.rank_of(args.feature)
    _log(f"influence rank of {args.feature}: {before_rank} -> {after_rank}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "explain": _cmd_explain,
    "audit": _cmd_audit,
    "swap-audit": _cmd_swap_audit,
    "rank-redundant": _cmd_rank_redundant,
    "debias": _cmd_debias,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (FlipAuditError, ValueError, OSError) as exc:
        print(f"flipaudit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
