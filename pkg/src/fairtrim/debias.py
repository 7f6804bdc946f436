"""Removing bias-inducing training points.

Pipeline: train on the full data, find discriminatory synthetic pairs, rank
the training rows by how much they raise loss on those pairs, then peel off
chunks of the most harmful rows (retraining each time) until discrimination
stops improving. The loop returns the best dataset seen, i.e. the subset one
chunk *before* the first non-improving measurement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import AlreadyFair, EmptyDataset, RangeError
from .fairness import (
    SimilarityConfig,
    build_influence_set,
    discriminatory_pairs,
    estimate_discrim,
    generate_similar_pairs,
)
from .influence import InfluenceRanking, SolverConfig, rank_by_influence
from .model import Hyperparameters, Model, train


@dataclass(frozen=True)
class DebiasConfig:
    similarity: SimilarityConfig
    hp: Hyperparameters
    solver: SolverConfig = SolverConfig()
    chunk_percent: float = 1.0  # chunk i removes ceil(i * chunk_percent/100 * n) rows
    max_chunks: int = 100
    freeze_pool: bool = False  # reuse one measurement pool across iterations

    def __post_init__(self):
        if not (0.0 < self.chunk_percent <= 100.0):
            raise RangeError(f"chunk_percent must lie in (0, 100], got {self.chunk_percent}")
        if self.max_chunks < 1:
            raise RangeError("max_chunks must be >= 1")


@dataclass(frozen=True)
class ChunkMeasurement:
    chunk_index: int
    rows_removed: int
    discrimination: float


@dataclass(frozen=True, eq=False)
class DebiasReport:
    """Everything observed during the removal loop."""

    trace: tuple[ChunkMeasurement, ...]
    stop_index: int  # chunk index of the returned dataset
    removed_row_ids: tuple[int, ...]  # in ranking order
    ranking: InfluenceRanking | None
    already_fair: bool = False
    loop_exhausted: bool = False

    def to_json(self) -> dict:
        return {
            "stop_index": self.stop_index,
            "removed_row_ids": list(self.removed_row_ids),
            "already_fair": self.already_fair,
            "loop_exhausted": self.loop_exhausted,
            "trace": [
                {
                    "chunk_index": t.chunk_index,
                    "rows_removed": t.rows_removed,
                    "discrimination": t.discrimination,
                }
                for t in self.trace
            ],
            "ranking_row_ids": None if self.ranking is None else list(self.ranking.row_ids),
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def sort_dataset(
    d: Dataset, m: Model, similarity: SimilarityConfig, solver: SolverConfig
) -> InfluenceRanking:
    """Rank the rows of ``d`` most-harmful-first for model ``m``.

    Harm is measured against the lower-confidence members of the model's
    discriminatory pairs on a synthetic pool. Raises AlreadyFair when the
    model discriminates on no pair (there is nothing to rank against).
    """
    pool = generate_similar_pairs(d, similarity, call_index=None)
    discm = discriminatory_pairs(m, pool)
    if len(discm) == 0:
        raise AlreadyFair(
            f"model discriminates on none of the {len(pool)} synthetic pairs"
        )
    iset = build_influence_set(m, discm)
    return rank_by_influence(iset, d, m, solver)


def removal_count(i: int, chunk_percent: float, n: int) -> int:
    """Rows removed by chunk i of an n-row dataset (ceil of i*percent)."""
    if i < 0:
        raise RangeError(f"chunk index must be >= 0, got {i}")
    return int(math.ceil(i * chunk_percent / 100.0 * n))


def drop_first(ranking: InfluenceRanking, d: Dataset, i: int, chunk_percent: float) -> Dataset:
    """Remove chunk i: the first ceil(i * chunk_percent/100 * |d|) ranked rows."""
    k = removal_count(i, chunk_percent, len(d))
    if k > len(d):
        raise RangeError(f"chunk {i} would remove {k} of {len(d)} rows")
    drop = set(ranking.row_ids[:k])
    return d.without_row_ids(drop)


def debias_data(
    d: Dataset,
    cfg: DebiasConfig,
    train_fn=None,
    discrim_fn=None,
) -> tuple[Dataset, DebiasReport]:
    """Iteratively remove ranked chunks until discrimination stops improving.

    Chunk i keeps all but the top ceil(i * chunk_percent/100 * |d|) ranked
    rows; a model is retrained on each candidate and its discrimination
    measured on a fresh pool (or a frozen one when cfg.freeze_pool). The
    first measurement that fails to improve on the best seen ends the loop,
    returning the previous candidate. If the initial model discriminates on
    no pair at all, ``d`` is returned unchanged with already_fair set.

    ``train_fn(subset) -> model`` and ``discrim_fn(model, chunk_index) ->
    float`` default to real training and fresh-pool estimation; they exist so
    the stopping logic can be driven in isolation.
    """
    if len(d) == 0:
        raise EmptyDataset("cannot debias an empty dataset")
    if train_fn is None:
        train_fn = lambda subset: train(subset, cfg.hp)
    if discrim_fn is None:
        if cfg.freeze_pool:
            frozen = generate_similar_pairs(d, cfg.similarity, call_index=0)

            def discrim_fn(model, _i, _pool=frozen):
                from .model import predict_batch

                l1, _ = predict_batch(model, _pool.first)
                l2, _ = predict_batch(model, _pool.second)
                return float(np.mean(l1 != l2))

        else:
            discrim_fn = lambda model, i: estimate_discrim(
                model, d, cfg.similarity, call_index=i
            )

    full_model = train_fn(d)
    try:
        ranking = sort_dataset(d, full_model, cfg.similarity, cfg.solver)
    except AlreadyFair:
        report = DebiasReport(
            trace=(), stop_index=0, removed_row_ids=(), ranking=None, already_fair=True
        )
        return d, report

    least = math.inf
    trace = []
    candidate = d
    model = full_model
    prev = d
    for i in range(0, cfg.max_chunks + 1):
        if i > 0:
            k = removal_count(i, cfg.chunk_percent, len(d))
            if k >= len(d):  # would leave nothing to train on
                return candidate, DebiasReport(
                    trace=tuple(trace),
                    stop_index=max(i - 1, 0),
                    removed_row_ids=ranking.row_ids[
                        : removal_count(max(i - 1, 0), cfg.chunk_percent, len(d))
                    ],
                    ranking=ranking,
                    loop_exhausted=True,
                )
            prev = candidate
            candidate = drop_first(ranking, d, i, cfg.chunk_percent)
            model = train_fn(candidate)
        discm = float(discrim_fn(model, i))
        trace.append(
            ChunkMeasurement(i, removal_count(i, cfg.chunk_percent, len(d)), discm)
        )
        if discm >= least:
            stop = i - 1
            return prev, DebiasReport(
                trace=tuple(trace),
                stop_index=stop,
                removed_row_ids=ranking.row_ids[
                    : removal_count(stop, cfg.chunk_percent, len(d))
                ],
                ranking=ranking,
            )
        least = discm

    # strict improvement all the way to max_chunks: keep the last candidate
    return candidate, DebiasReport(
        trace=tuple(trace),
        stop_index=cfg.max_chunks,
        removed_row_ids=ranking.row_ids[
            : removal_count(cfg.max_chunks, cfg.chunk_percent, len(d))
        ],
        ranking=ranking,
        loop_exhausted=True,
    )
