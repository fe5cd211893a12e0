#!/usr/bin/env python3
"""Generate the shipped synthetic credit-style demo dataset.

The dataset is fully synthetic (no real individuals), deterministic for a
fixed seed, and shaped to exercise the package: a near-dependent column for
redundancy analysis, a mild age effect so the under-sampling/debias workflow
has a bias to find, two categorical variables, and an inert gender column
for the swap audit.
"""

from __future__ import annotations

import argparse
import csv
import json
from pathlib import Path

import numpy as np

EDUCATION_LEVELS = ["high-school", "university", "graduate"]
GENDERS = ["Male", "Female"]


def generate(n_rows: int, seed: int):
    rng = np.random.default_rng(seed)
    young = rng.random(n_rows) < 0.52
    age = np.where(young,
                   rng.integers(22, 35, size=n_rows),
                   rng.integers(35, 76, size=n_rows)).astype(float)

    edu_idx = rng.choice(3, size=n_rows, p=[0.45, 0.4, 0.15])
    # money features are in k$, keeping every column on a comparable scale
    limit = np.round(np.clip(
        rng.lognormal(2.4 + 0.25 * edu_idx + 0.004 * (age - 40), 0.5), 0.5, 50.0), 1)
    utilization = np.clip(rng.beta(2.2, 2.8, size=n_rows), 0.01, 0.99)
    bill = np.round(limit * utilization, 2)
    pay_ratio = np.clip(rng.beta(1.8, 4.0, size=n_rows), 0.0, 1.0)
    payment = np.round(bill * pay_ratio, 2)
    # nearly dependent on limit and bill: the redundancy the QR analysis finds
    available = limit - bill + rng.normal(0.0, 0.015, size=n_rows)
    gender = rng.choice(2, size=n_rows)

    logit = (
        6.6 * utilization
        - 5.3 * pay_ratio
        - 0.09 * (age - 38.0)
        - 1.0 * edu_idx
        - 0.09 * (limit - 12.0)
        + rng.normal(0.0, 0.30, size=n_rows)
        - 0.4
    )
    default = (1.0 / (1.0 + np.exp(-logit)) > rng.random(n_rows)).astype(int)

    rows = []
    for i in range(n_rows):
        rows.append({
            "limit": f"{limit[i]:.1f}",
            "age": f"{age[i]:.0f}",
            "bill_amount": f"{bill[i]:.2f}",
            "payment": f"{payment[i]:.2f}",
            "available_credit": f"{available[i]:.4f}",
            "education": EDUCATION_LEVELS[edu_idx[i]],
            "gender": str(gender[i]),
            "default": str(default[i]),
        })
    return rows


SCHEMA = {
    "label": {"name": "default"},
    "features": [
        {"name": "limit", "kind": "continuous", "bounds": [0.5, 50.0],
         "scale_group": "money"},
        {"name": "age", "kind": "continuous", "bounds": [18, 80], "integer": True,
         "scale_group": "years"},
        {"name": "bill_amount", "kind": "continuous", "bounds": [0.0, 50.0],
         "scale_group": "money"},
        {"name": "payment", "kind": "continuous", "bounds": [0.0, 50.0],
         "scale_group": "money"},
        {"name": "available_credit", "kind": "continuous", "bounds": [-50.0, 50.0],
         "scale_group": "money"},
        {"name": "education", "kind": "categorical",
         "levels": EDUCATION_LEVELS},
        {"name": "gender", "kind": "binary"},
    ],
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--out-dir", default="data")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = generate(args.rows, args.seed)
    csv_path = out / "demo_credit.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    schema_path = out / "demo_credit_schema.json"
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(SCHEMA, fh, indent=2)
        fh.write("\n")
    n_default = sum(int(r["default"]) for r in rows)
    print(f"wrote {csv_path} ({len(rows)} rows, {n_default} defaults) and {schema_path}")


if __name__ == "__main__":
    main()
