"""Deterministic synthetic credit-scoring sample.

The public German Credit data is not available in this environment, so
demos and the desk-scale test runs use a generated stand-in that follows
the shipped german_credit schema. The latent risk score depends only on
non-sensitive attributes; any sensitive-attribute dependence a trained
model exhibits is therefore spurious (small-sample overfitting), which is
exactly what detection plus retraining is supposed to repair. Calibrated
so the baseline classifier lands near the reference operating point (test
accuracy about 0.81, individual fairness about 0.73).
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from .data import DatasetSchema, builtin_schema

# Latent-score calibration. AGE_W / GENDER_W add real sensitive-attribute
# effects (zero: all observed bias is spurious); SCALE controls label noise.
AGE_W = 0.0
GENDER_W = 0.0
SCALE = 6.5
INTERCEPT = 0.42

DEFAULT_ROWS = 1000
DEFAULT_SEED = 7


def _sample_columns(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    cols["checking_status"] = rng.choice(4, n, p=[0.39, 0.27, 0.27, 0.07])
    cols["duration_months"] = np.clip(np.round(4 + rng.gamma(2.2, 9.5, n)), 4, 72)
    cols["credit_history"] = rng.choice(5, n, p=[0.04, 0.05, 0.53, 0.09, 0.29])
    cols["purpose"] = rng.choice(
        10, n, p=[0.23, 0.10, 0.18, 0.28, 0.01, 0.02, 0.05, 0.01, 0.10, 0.02]
    )
    cols["credit_amount"] = np.clip(np.round(np.exp(rng.normal(7.9, 0.75, n))), 250, 18424)
    cols["savings_status"] = rng.choice(5, n, p=[0.60, 0.10, 0.06, 0.06, 0.18])
    cols["employment_since"] = rng.choice(5, n, p=[0.06, 0.17, 0.34, 0.17, 0.26])
    cols["installment_rate"] = 1 + rng.choice(4, n, p=[0.14, 0.23, 0.16, 0.47])
    cols["gender"] = rng.choice(2, n, p=[0.31, 0.69])
    cols["other_debtors"] = rng.choice(3, n, p=[0.91, 0.04, 0.05])
    cols["residence_since"] = 1 + rng.choice(4, n, p=[0.13, 0.31, 0.15, 0.41])
    cols["property"] = rng.choice(4, n, p=[0.28, 0.23, 0.33, 0.16])
    cols["age_years"] = np.clip(np.round(19 + rng.gamma(2.6, 6.0, n)), 19, 69)
    cols["other_installment_plans"] = rng.choice(3, n, p=[0.14, 0.05, 0.81])
    cols["housing"] = rng.choice(3, n, p=[0.18, 0.71, 0.11])
    cols["existing_credits"] = 1 + rng.choice(4, n, p=[0.63, 0.33, 0.03, 0.01])
    cols["job"] = rng.choice(4, n, p=[0.02, 0.20, 0.63, 0.15])
    cols["num_dependents"] = 1 + rng.choice(2, n, p=[0.85, 0.15])
    cols["own_telephone"] = rng.choice(2, n, p=[0.60, 0.40])
    cols["foreign_worker"] = rng.choice(2, n, p=[0.04, 0.96])
    return cols


def _latent_score(norm: dict[str, np.ndarray]) -> np.ndarray:
    return (
        INTERCEPT
        + 1.35 * (norm["checking_status"] - 0.45)
        - 1.50 * (norm["duration_months"] - 0.30)
        - 1.30 * (norm["credit_amount"] - 0.20)
        + 0.90 * (norm["savings_status"] - 0.35)
        + 0.70 * (norm["employment_since"] - 0.50)
        - 0.45 * (norm["installment_rate"] - 0.60)
        + 0.80 * (norm["credit_history"] - 0.55)
        - 0.40 * (norm["property"] - 0.45)
        + 0.30 * (norm["housing"] - 0.40)
        + 0.25 * (norm["own_telephone"] - 0.50)
        + AGE_W * (norm["age_years"] - 0.40)
        + GENDER_W * (norm["gender"] - 0.50)
    )


def generate_rows(n_rows: int, seed: int) -> tuple[DatasetSchema, list[list[str]]]:
    """Raw CSV rows (tokens, schema column order) for the synthetic sample."""
    schema = builtin_schema("german_credit")
    rng = np.random.default_rng(seed)
    cols = _sample_columns(n_rows, rng)

    by_name = {a.name: a for a in schema.feature_attributes}
    norm = {}
    for name, values in cols.items():
        attr = by_name[name]
        codes = values if attr.is_categorical else values - attr.lo
        norm[name] = codes / (attr.size - 1) if attr.size > 1 else np.zeros(n_rows)
    score = _latent_score(norm)
    p_good = 1.0 / (1.0 + np.exp(-SCALE * score))
    labels = (rng.random(n_rows) < p_good).astype(int)

    rows = []
    for i in range(n_rows):
        row = []
        for attr in schema.attributes:
            if attr.kind == "label":
                row.append(attr.values[labels[i]])
            elif attr.is_categorical:
                row.append(attr.values[int(cols[attr.name][i])])
            else:
                row.append(str(int(cols[attr.name][i])))
        rows.append(row)
    return schema, rows


def write_synthetic_credit(
    path, n_rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED
) -> Path:
    """Write the synthetic credit CSV; deterministic per (n_rows, seed)."""
    schema, rows = generate_rows(n_rows, seed)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([a.name for a in schema.attributes])
        writer.writerows(rows)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Write a synthetic credit-scoring CSV following the "
        "built-in german_credit schema."
    )
    parser.add_argument("out", help="output CSV path")
    parser.add_argument("--rows", type=int, default=DEFAULT_ROWS)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args(argv)
    write_synthetic_credit(args.out, args.rows, args.seed)
    print(f"wrote {args.rows} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
