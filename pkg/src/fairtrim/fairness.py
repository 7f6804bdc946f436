"""Individual-discrimination testing on synthetic similar pairs.

A *similar pair* is two feature vectors identical except for the sensitive
attribute (which is always flipped) and, when the similarity radius lam > 0,
numeric coordinates allowed to drift within +/-lam (clipped to [0, 1]). A
model discriminates on a pair when it predicts different labels for the two
members; the individual discrimination of a model is the fraction of such
pairs over a synthetic pool.

Pool size contract: pool_multiplier * |d| seed points are drawn uniformly
from the encoded feature space; each seed gets 1 companion when lam == 0
(the companion copies the seed's numerics bitwise) and 2 companions when
lam > 0. With the default multiplier of 100 that yields 100x|d| pairs at
lam == 0 and 200x|d| pairs otherwise.

Determinism: draws happen per column in encoding-layout order (seeds first,
then companion perturbations), from a generator keyed on (rng_seed, stream,
call_index), so any pool is reproducible from its config and call index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NUMERIC, Dataset
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    MissingGroup,
    RangeError,
    SensitiveAbsent,
)
from .influence import InfluenceSet
from .model import predict_batch

_POOL_STREAM_SORT = 0
_POOL_STREAM_ESTIMATE = 1


@dataclass(frozen=True)
class SimilarityConfig:
    lam: float = 0.0  # numeric similarity radius in normalized units
    pool_multiplier: int = 100  # seeds per dataset row
    companions_per_seed: int | None = None  # default: 1 if lam == 0 else 2
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise RangeError(f"lam must lie in [0, 1], got {self.lam}")
        if self.pool_multiplier < 1:
            raise RangeError("pool_multiplier must be >= 1")
        if self.companions_per_seed is not None and self.companions_per_seed < 1:
            raise RangeError("companions_per_seed must be >= 1")

    @property
    def companions(self) -> int:
        if self.companions_per_seed is not None:
            return self.companions_per_seed
        return 1 if self.lam == 0.0 else 2


@dataclass(frozen=True, eq=False)
class SimilarPair:
    first: np.ndarray
    second: np.ndarray


@dataclass(frozen=True, eq=False)
class PairPool:
    """Columnar batch of similar pairs (row i of each matrix is one pair)."""

    first: np.ndarray  # (N, width)
    second: np.ndarray  # (N, width)

    def __post_init__(self):
        if self.first.shape != self.second.shape:
            raise DimensionMismatch(
                f"pair matrices disagree: {self.first.shape} vs {self.second.shape}"
            )

    def __len__(self) -> int:
        return int(self.first.shape[0])

    def pair(self, i: int) -> SimilarPair:
        return SimilarPair(self.first[i].copy(), self.second[i].copy())

    def pairs(self) -> list[SimilarPair]:
        return [self.pair(i) for i in range(len(self))]

    def select(self, mask: np.ndarray) -> "PairPool":
        return PairPool(self.first[mask].copy(), self.second[mask].copy())


def _pool_rng(cfg: SimilarityConfig, call_index: int | None) -> np.random.Generator:
    if call_index is None:
        return np.random.default_rng([cfg.rng_seed, _POOL_STREAM_SORT])
    return np.random.default_rng([cfg.rng_seed, _POOL_STREAM_ESTIMATE, call_index])


def generate_similar_pairs(
    d: Dataset, cfg: SimilarityConfig, call_index: int | None = None
) -> PairPool:
    """Draw the synthetic pool for ``d`` (see module docstring for contract)."""
    if d.schema.sensitive is None:
        raise SensitiveAbsent("similar pairs require a sensitive column")
    if len(d) == 0:
        raise EmptyDataset("cannot size a pool from an empty dataset")
    rng = _pool_rng(cfg, call_index)

    n_seeds = cfg.pool_multiplier * len(d)
    k = cfg.companions
    width = d.width
    seeds = np.empty((n_seeds, width), dtype=np.float64)
    for codec in d.encoding.codecs:
        if codec.kind == NUMERIC:
            seeds[:, codec.start] = rng.random(n_seeds)
        else:
            choice = rng.integers(codec.width, size=n_seeds)
            block = np.zeros((n_seeds, codec.width))
            block[np.arange(n_seeds), choice] = 1.0
            seeds[:, codec.start : codec.stop] = block

    first = np.repeat(seeds, k, axis=0)
    second = first.copy()
    sens = d.sensitive_block
    second[:, sens] = first[:, sens][:, ::-1]  # flip the 2-wide one-hot

    if cfg.lam > 0.0:
        n_total = first.shape[0]
        for codec in d.encoding.codecs:
            if codec.kind != NUMERIC:
                continue
            v = first[:, codec.start]
            lo = np.maximum(0.0, v - cfg.lam)
            hi = np.minimum(1.0, v + cfg.lam)
            second[:, codec.start] = lo + rng.random(n_total) * (hi - lo)

    return PairPool(first, second)


def discriminatory_pairs(m, pool: PairPool) -> PairPool:
    """The subset of ``pool`` on which ``m`` predicts different labels."""
    l1, _ = predict_batch(m, pool.first)
    l2, _ = predict_batch(m, pool.second)
    return pool.select(l1 != l2)


def build_influence_set(m, discm: PairPool) -> InfluenceSet:
    """Lower-confidence member of each discriminatory pair, with its predicted
    label as tentative ground truth. Confidence ties take the first member."""
    if len(discm) == 0:
        return InfluenceSet(
            features=np.zeros((0, discm.first.shape[1])), labels=np.zeros(0, dtype=np.int64)
        )
    l1, c1 = predict_batch(m, discm.first)
    l2, c2 = predict_batch(m, discm.second)
    take_first = c1 <= c2
    features = np.where(take_first[:, None], discm.first, discm.second)
    labels = np.where(take_first, l1, l2).astype(np.int64)
    return InfluenceSet(features=features, labels=labels)


def estimate_discrim(
    m, d: Dataset, cfg: SimilarityConfig, call_index: int = 0
) -> float:
    """Fraction of a fresh synthetic pool on which ``m`` flips its prediction.

    call_index picks an independent pool stream; repeated estimates inside a
    loop should pass distinct indices, re-measurement of the same pool the
    same index.
    """
    pool = generate_similar_pairs(d, cfg, call_index=call_index)
    l1, _ = predict_batch(m, pool.first)
    l2, _ = predict_batch(m, pool.second)
    return float(np.mean(l1 != l2))


def accuracy(m, d: Dataset) -> float:
    if len(d) == 0:
        raise EmptyDataset("accuracy over an empty dataset is undefined")
    labels, _ = predict_batch(m, d.encoded)
    return float(np.mean(labels == d.labels))


def parity_from_predictions(
    preds: np.ndarray, groups, categories: tuple[str, str]
) -> float:
    """|P(pred=1 | g0) - P(pred=1 | g1)| from raw predictions and group tags."""
    preds = np.asarray(preds)
    groups = np.asarray(groups)
    rates = []
    for cat in categories:
        mask = groups == cat
        if not mask.any():
            raise MissingGroup(f"group {cat!r} has no rows in the evaluation set")
        rates.append(float(preds[mask].mean()))
    return abs(rates[0] - rates[1])


def statistical_parity_difference(m, d: Dataset) -> float:
    """Absolute gap in positive-prediction rate between the two groups."""
    if d.group_values is None or d.sensitive_categories is None:
        raise SensitiveAbsent("dataset carries no sensitive-group metadata")
    if len(d) == 0:
        raise EmptyDataset("parity over an empty dataset is undefined")
    labels, _ = predict_batch(m, d.encoded)
    return parity_from_predictions(labels, d.group_values, d.sensitive_categories)


def metrics_report(m, d: Dataset, cfg: SimilarityConfig, call_index: int = 0) -> dict:
    """Discrimination, accuracy, and (when group metadata exists) parity."""
    pool = generate_similar_pairs(d, cfg, call_index=call_index)
    l1, _ = predict_batch(m, pool.first)
    l2, _ = predict_batch(m, pool.second)
    out = {
        "individual_discrimination": float(np.mean(l1 != l2)),
        "pool_pairs": int(len(pool)),
        "discriminatory_pairs": int(np.sum(l1 != l2)),
        "accuracy": accuracy(m, d),
    }
    try:
        out["statistical_parity_difference"] = statistical_parity_difference(m, d)
    except (SensitiveAbsent, MissingGroup):
        out["statistical_parity_difference"] = None
    return out
