"""Hyperparameter-grid experiments comparing three trainings per config.

Per grid config (hidden sizes x batch size x split permutation seed):

* ``full``: trained on the train split as-is;
* ``sr``:   trained after dropping the sensitive column, evaluated through a
            feature mask so it lives in the original space;
* ``ours``: trained on the debiased train split (influence-ranked removal).

Phase two pools the unfair rows found across configs, filters them out of
every test split, and scores accuracy and statistical parity for all three
models per config on that shared debiased test set. Individual
discrimination is measured on synthetic pools from each config's train
split. Report files are byte-stable across reruns of the same spec.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .data import Dataset, SplitSpec, drop_sensitive, split
from .debias import DebiasConfig, debias_data
from .errors import EmptyAfterFilter, EmptyResult, RangeError
from .fairness import (
    SimilarityConfig,
    accuracy,
    estimate_discrim,
    statistical_parity_difference,
)
from .influence import SolverConfig
from .model import Hyperparameters, mask_sensitive, train

TECHNIQUES = ("full", "sr", "ours")


def nearest_power_of_two(x: float) -> int:
    """Power of two with least linear distance to x; ties round up."""
    if x < 1.0:
        return 1
    lo = 2 ** int(math.floor(math.log2(x)))
    hi = lo * 2
    return lo if (x - lo) < (hi - x) else hi


def derived_batch_sizes(n_rows: int) -> tuple[int, ...]:
    """Nearest powers of two to n/10 and n/20, deduplicated in that order."""
    sizes = [nearest_power_of_two(n_rows / 10), nearest_power_of_two(n_rows / 20)]
    out = []
    for s in sizes:
        if s not in out:
            out.append(s)
    return tuple(out)


@dataclass(frozen=True)
class GridSpec:
    hidden1_choices: tuple[int, ...] = (16, 24)
    hidden2_choices: tuple[int, ...] = (8,)
    batch_sizes: tuple[int, ...] | None = None  # None: derive from dataset size
    permutation_seeds: tuple[int, ...] = (0, 1)
    train_fraction: float = 0.8
    epochs: int = 1000
    learning_rate: float = 0.01
    lam: float = 0.0
    pool_multiplier: int = 100
    chunk_percent: float = 1.0
    max_chunks: int = 100
    solver: SolverConfig = SolverConfig()
    freeze_pool: bool = False
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not (self.hidden1_choices and self.hidden2_choices and self.permutation_seeds):
            raise RangeError("grid axes must be non-empty")
        if self.workers < 1:
            raise RangeError("workers must be >= 1")

    @classmethod
    def full_scale(cls, **overrides) -> "GridSpec":
        """The full 3x2x(2 derived batches)x20 = 240-config grid."""
        base = dict(
            hidden1_choices=(16, 24, 32),
            hidden2_choices=(8, 12),
            batch_sizes=None,
            permutation_seeds=tuple(range(20)),
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class TechniqueMetrics:
    discrimination: float
    accuracy: float | None  # None when this config's test rows all got filtered
    parity: float | None


@dataclass(frozen=True)
class ConfigRecord:
    config_id: str
    hidden1: int
    hidden2: int
    batch_size: int
    permutation_seed: int
    train_rows: int
    test_rows: int
    debiased_test_rows: int | None
    removed_row_ids: tuple[int, ...]
    stop_index: int
    already_fair: bool
    loop_exhausted: bool
    metrics: dict  # technique -> TechniqueMetrics


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    records: tuple[ConfigRecord, ...]
    unfair_union: tuple[int, ...]

    def picks(self) -> dict:
        """Best config by each criterion, judged on the debiased model.

        Tie-breaks (documented contract): least discrimination prefers higher
        accuracy, then lexicographic config_id; highest accuracy prefers
        lower discrimination, then config_id; least parity prefers higher
        accuracy, then config_id. Configs with no surviving test rows are
        skipped for accuracy/parity picks.
        """
        if not self.records:
            raise EmptyResult("no experiment records to aggregate")

        def ours(r):
            return r.metrics["ours"]

        scored = [r for r in self.records if ours(r).accuracy is not None]
        least_discm = min(
            self.records,
            key=lambda r: (
                ours(r).discrimination,
                -(ours(r).accuracy if ours(r).accuracy is not None else -math.inf),
                r.config_id,
            ),
        )
        out = {"least_discrimination": _pick_view(least_discm)}
        if scored:
            best_acc = min(
                scored,
                key=lambda r: (-ours(r).accuracy, ours(r).discrimination, r.config_id),
            )
            least_parity = min(
                scored, key=lambda r: (ours(r).parity, -ours(r).accuracy, r.config_id)
            )
            out["highest_accuracy"] = _pick_view(best_acc)
            out["least_parity"] = _pick_view(least_parity)
        else:
            out["highest_accuracy"] = None
            out["least_parity"] = None
        return out


def _pick_view(r: ConfigRecord) -> dict:
    return {
        "config_id": r.config_id,
        "metrics": {
            tech: {
                "discrimination": m.discrimination,
                "accuracy": m.accuracy,
                "parity": m.parity,
            }
            for tech, m in r.metrics.items()
        },
    }


def unfair_points_union(removals: list[tuple[int, ...]]) -> tuple[int, ...]:
    """Sorted union of unfair row_ids found across configs."""
    out: set[int] = set()
    for ids in removals:
        out.update(ids)
    return tuple(sorted(out))


def debiased_test_set(test: Dataset, unfair: tuple[int, ...]) -> Dataset:
    out = test.without_row_ids(set(unfair))
    if len(out) == 0:
        raise EmptyAfterFilter(
            f"all {len(test)} test rows were flagged unfair by some config"
        )
    return out


def _config_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _enumerate_configs(d: Dataset, spec: GridSpec):
    batches = spec.batch_sizes or derived_batch_sizes(len(d))
    combos = list(
        product(spec.hidden1_choices, spec.hidden2_choices, batches, spec.permutation_seeds)
    )
    return [
        (i, f"h{h1}-h{h2}-b{bs}-p{ps}", h1, h2, bs, ps)
        for i, (h1, h2, bs, ps) in enumerate(combos)
    ]


def _phase_one(args):
    """Train full/sr/ours for one config; returns a picklable payload."""
    d, spec, (index, config_id, h1, h2, bs, ps) = args
    tr, te = split(d, SplitSpec(permutation_seed=ps, train_fraction=spec.train_fraction))
    hp = Hyperparameters(
        hidden1=h1, hidden2=h2, batch_size=bs,
        epochs=spec.epochs, learning_rate=spec.learning_rate,
        weight_init_seed=spec.base_seed,
    )
    sim = SimilarityConfig(
        lam=spec.lam,
        pool_multiplier=spec.pool_multiplier,
        rng_seed=_config_seed(spec.base_seed, index),
    )
    full = train(tr, hp)
    sr = mask_sensitive(train(drop_sensitive(tr), hp), tr)
    debiased, report = debias_data(
        tr,
        DebiasConfig(
            similarity=sim, hp=hp, solver=spec.solver,
            chunk_percent=spec.chunk_percent, max_chunks=spec.max_chunks,
            freeze_pool=spec.freeze_pool,
        ),
    )
    ours = train(debiased, hp)

    # final pools: call indices past anything the removal loop used
    models = {"full": full, "sr": sr, "ours": ours}
    discm = {
        tech: estimate_discrim(models[tech], tr, sim, call_index=spec.max_chunks + 1 + j)
        for j, tech in enumerate(TECHNIQUES)
    }
    return {
        "index": index,
        "config_id": config_id,
        "h1": h1, "h2": h2, "bs": bs, "ps": ps,
        "train_rows": len(tr),
        "test": te,
        "models": models,
        "discrimination": discm,
        "removed": report.removed_row_ids,
        "stop_index": report.stop_index,
        "already_fair": report.already_fair,
        "loop_exhausted": report.loop_exhausted,
    }


def run_grid(d: Dataset, spec: GridSpec) -> ExperimentResult:
    configs = _enumerate_configs(d, spec)
    jobs = [(d, spec, c) for c in configs]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            payloads = list(pool.map(_phase_one, jobs))
    else:
        payloads = [_phase_one(j) for j in jobs]
    payloads.sort(key=lambda p: p["index"])

    union = unfair_points_union([p["removed"] for p in payloads])

    records = []
    for p in payloads:
        try:
            dtest = debiased_test_set(p["test"], union)
        except EmptyAfterFilter:
            dtest = None
        metrics = {}
        for tech in TECHNIQUES:
            m = p["models"][tech]
            metrics[tech] = TechniqueMetrics(
                discrimination=p["discrimination"][tech],
                accuracy=None if dtest is None else accuracy(m, dtest),
                parity=None if dtest is None else statistical_parity_difference(m, dtest),
            )
        records.append(
            ConfigRecord(
                config_id=p["config_id"],
                hidden1=p["h1"], hidden2=p["h2"],
                batch_size=p["bs"], permutation_seed=p["ps"],
                train_rows=p["train_rows"], test_rows=len(p["test"]),
                debiased_test_rows=None if dtest is None else len(dtest),
                removed_row_ids=p["removed"],
                stop_index=p["stop_index"],
                already_fair=p["already_fair"],
                loop_exhausted=p["loop_exhausted"],
                metrics=metrics,
            )
        )
    return ExperimentResult(records=tuple(records), unfair_union=union)


# --- report files -----------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)  # shortest round-trip form keeps files byte-stable
    return str(v)


def write_config_csv(result: ExperimentResult, path: str | Path) -> None:
    """One row per (config, technique)."""
    cols = (
        "config_id", "hidden1", "hidden2", "batch_size", "permutation_seed",
        "technique", "discrimination", "accuracy", "parity",
        "train_rows", "test_rows", "debiased_test_rows",
        "removed_count", "stop_index", "already_fair", "loop_exhausted",
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in result.records:
            for tech in TECHNIQUES:
                m = r.metrics[tech]
                w.writerow([
                    r.config_id, r.hidden1, r.hidden2, r.batch_size,
                    r.permutation_seed, tech,
                    _cell(m.discrimination), _cell(m.accuracy), _cell(m.parity),
                    r.train_rows, r.test_rows, _cell(r.debiased_test_rows),
                    len(r.removed_row_ids), r.stop_index,
                    int(r.already_fair), int(r.loop_exhausted),
                ])


def write_boxplot_csv(result: ExperimentResult, path: str | Path) -> None:
    """Five-number summaries per technique and metric across configs."""
    rows = []
    for tech in TECHNIQUES:
        for metric in ("discrimination", "accuracy", "parity"):
            vals = [
                getattr(r.metrics[tech], metric)
                for r in result.records
                if getattr(r.metrics[tech], metric) is not None
            ]
            if not vals:
                continue
            q = np.quantile(np.asarray(vals, dtype=np.float64), [0.0, 0.25, 0.5, 0.75, 1.0])
            rows.append([tech, metric] + [repr(float(x)) for x in q])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("technique", "metric", "min", "q1", "median", "q3", "max"))
        w.writerows(rows)


def write_summary_json(result: ExperimentResult, path: str | Path) -> None:
    obj = {
        "n_configs": len(result.records),
        "unfair_union": list(result.unfair_union),
        "picks": result.picks(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def emit_reports(result: ExperimentResult, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "configs": out / "configs.csv",
        "boxplot": out / "boxplot.csv",
        "summary": out / "summary.json",
    }
    write_config_csv(result, paths["configs"])
    write_boxplot_csv(result, paths["boxplot"])
    write_summary_json(result, paths["summary"])
    return {k: str(v) for k, v in paths.items()}
