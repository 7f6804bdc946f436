"""Synthetic datasets: a 7-row toy fixture and a biased loans generator.

The toy fixture is small enough to reason about by hand: approvals track
income except that one high-income, high-wealth applicant from the
disadvantaged group is denied (row 2). That single row is what a debiasing
run is expected to find and remove.

The large generator plants the same pathology at scale: labels follow a
group-blind credit score, then a fixed fraction of positive-label rows in
one group get flipped to denials. The flipped row ids are returned so tests
can check recall-style properties.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import FeatureSchema

TOY_HEADER = ("income", "wealth", "race", "decision")
TOY_ROWS = (
    ("1.0", "0.1", "white", "approved"),
    ("0.9", "0.7", "black", "denied"),
    ("0.8", "0.3", "white", "approved"),
    ("0.1", "0.7", "black", "denied"),
    ("0.1", "0.5", "white", "denied"),
    ("0.5", "0.9", "black", "denied"),
    ("1.0", "0.8", "black", "approved"),
)


def toy_schema() -> FeatureSchema:
    return FeatureSchema(
        columns=(("income", "numeric"), ("wealth", "numeric"), ("race", "categorical")),
        sensitive="race",
        label="decision",
        positive_label="approved",
    )


def write_toy_loans(csv_path: str | Path, schema_path: str | Path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TOY_HEADER)
        w.writerows(TOY_ROWS)
    with open(schema_path, "w") as fh:
        json.dump(toy_schema().to_json(), fh, indent=2)


def loans_schema() -> FeatureSchema:
    return FeatureSchema(
        columns=(
            ("income", "numeric"),
            ("savings", "numeric"),
            ("debt", "numeric"),
            ("employment", "categorical"),
            ("housing", "categorical"),
            ("group", "categorical"),
        ),
        sensitive="group",
        label="decision",
        positive_label="approved",
    )


def make_loans_rows(
    n: int, seed: int = 0, flip_rate: float = 0.35
) -> tuple[tuple[str, ...], list[tuple[str, ...]], list[int]]:
    """Biased loan applications: (header, raw rows, 1-based flipped row ids).

    A group-blind score decides creditworthiness; then flip_rate of the
    would-be approvals in group "beta" are recorded as denials. Those
    flipped rows are the planted bias.
    """
    rng = np.random.default_rng([seed, 99])
    income = rng.uniform(20.0, 120.0, size=n)
    savings = rng.uniform(0.0, 50.0, size=n)
    debt = rng.uniform(0.0, 30.0, size=n)
    employment = rng.choice(["stable", "contract", "none"], size=n)
    housing = rng.choice(["own", "rent"], size=n)
    group = rng.choice(["alpha", "beta"], size=n)

    score = (
        2.2 * (income - 20.0) / 100.0
        + 1.0 * savings / 50.0
        - 1.6 * debt / 30.0
        + 0.35 * (employment == "stable")
        + 0.15 * (housing == "own")
        + rng.normal(0.0, 0.15, size=n)
    )
    approved = score > 1.05  # roughly balanced classes

    flipped: list[int] = []
    flip_draw = rng.random(n)
    labels = approved.copy()
    for i in range(n):
        if approved[i] and group[i] == "beta" and flip_draw[i] < flip_rate:
            labels[i] = False
            flipped.append(i + 1)  # row ids are 1-based

    header = ("income", "savings", "debt", "employment", "housing", "group", "decision")
    rows = [
        (
            f"{income[i]:.4f}",
            f"{savings[i]:.4f}",
            f"{debt[i]:.4f}",
            str(employment[i]),
            str(housing[i]),
            str(group[i]),
            "approved" if labels[i] else "denied",
        )
        for i in range(n)
    ]
    return header, rows, flipped


def write_loans(
    csv_path: str | Path,
    schema_path: str | Path,
    n: int,
    seed: int = 0,
    flip_rate: float = 0.35,
) -> list[int]:
    """Write the biased loans CSV + schema JSON; returns flipped row ids."""
    header, rows, flipped = make_loans_rows(n, seed=seed, flip_rate=flip_rate)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    with open(schema_path, "w") as fh:
        json.dump(loans_schema().to_json(), fh, indent=2)
    return flipped
