"""Tabular ingestion: schema-driven CSV loading, encoding, splits.

Feature space convention used by the whole package:

* numeric columns are min-max scaled to [0, 1] with bounds fitted on the full
  dataset at load time (a constant column encodes to 0.0);
* categorical columns are one-hot encoded over the categories observed at
  load, in sorted order;
* the fitted EncodingSpec is frozen into the Dataset and inherited by every
  subset, so train/test/debiased subsets and synthetic points all live in one
  feature space.

Rows keep their 1-based CSV position as a stable ``row_id`` through every
subsetting operation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    LabelError,
    ParseError,
    RangeError,
    SchemaMismatch,
    SensitiveAbsent,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
_KINDS = (NUMERIC, CATEGORICAL)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureSchema:
    """Declares the columns of a tabular dataset.

    ``columns`` lists the feature columns as (name, kind) pairs in encoding
    order, where kind is "numeric" or "categorical". The label column is named
    separately and is never encoded as a feature. ``positive_label`` is the
    raw label value mapped to outcome 1; exactly one other raw value may occur
    and maps to 0.
    """

    columns: tuple[tuple[str, str], ...]
    sensitive: str | None
    label: str
    positive_label: str

    def __post_init__(self):
        if not self.columns:
            raise SchemaMismatch("schema declares no feature columns")
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in schema: {names}")
        for name, kind in self.columns:
            if kind not in _KINDS:
                raise SchemaMismatch(f"column {name!r} has unknown kind {kind!r}")
        if self.label in names:
            raise SchemaMismatch(f"label column {self.label!r} also listed as a feature")
        if self.sensitive is not None:
            if self.sensitive not in names:
                raise SchemaMismatch(f"sensitive column {self.sensitive!r} not in schema")
            if dict(self.columns)[self.sensitive] != CATEGORICAL:
                raise SchemaMismatch(f"sensitive column {self.sensitive!r} must be categorical")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def kind_of(self, name: str) -> str:
        return dict(self.columns)[name]

    def to_json(self) -> dict:
        return {
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "sensitive": self.sensitive,
            "label": self.label,
            "positive_label": self.positive_label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        try:
            cols = tuple((c["name"], c["kind"]) for c in obj["columns"])
            return cls(
                columns=cols,
                sensitive=obj.get("sensitive"),
                label=obj["label"],
                positive_label=str(obj["positive_label"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed schema JSON: {exc}") from exc


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"schema file {path} is not valid JSON: {exc}") from exc
    return FeatureSchema.from_json(obj)


@dataclass(frozen=True)
class ColumnCodec:
    """Encoding recipe for one feature column.

    Numeric columns occupy one output column scaled by (lo, hi); categorical
    columns occupy one output column per category, in sorted category order.
    """

    name: str
    kind: str
    start: int
    stop: int
    categories: tuple[str, ...] | None = None
    lo: float | None = None
    hi: float | None = None

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class EncodingSpec:
    codecs: tuple[ColumnCodec, ...]

    @property
    def width(self) -> int:
        return self.codecs[-1].stop if self.codecs else 0

    def codec(self, name: str) -> ColumnCodec:
        for c in self.codecs:
            if c.name == name:
                return c
        raise SchemaMismatch(f"no codec for column {name!r}")

    def block(self, name: str) -> slice:
        c = self.codec(name)
        return slice(c.start, c.stop)

    def encode_column(self, codec: ColumnCodec, values: list[str]) -> np.ndarray:
        n = len(values)
        out = np.zeros((n, codec.width), dtype=np.float64)
        if codec.kind == NUMERIC:
            parsed = _parse_numeric(codec.name, values)
            span = codec.hi - codec.lo
            if span > 0.0:
                out[:, 0] = (parsed - codec.lo) / span
            # constant column: leave zeros
        else:
            index = {cat: i for i, cat in enumerate(codec.categories)}
            for r, v in enumerate(values):
                if v not in index:
                    raise SchemaMismatch(
                        f"column {codec.name!r}: value {v!r} not among fitted "
                        f"categories {codec.categories}"
                    )
                out[r, index[v]] = 1.0
        return out

    def encode_rows(self, header: tuple[str, ...], rows: list[tuple[str, ...]]) -> np.ndarray:
        """Encode raw string rows (given in ``header`` column order)."""
        col_idx = {name: i for i, name in enumerate(header)}
        blocks = []
        for codec in self.codecs:
            values = [row[col_idx[codec.name]] for row in rows]
            blocks.append(self.encode_column(codec, values))
        if not blocks:
            return np.zeros((len(rows), 0), dtype=np.float64)
        return np.hstack(blocks)

    def decode_vector(self, x: np.ndarray) -> dict:
        """Map one encoded vector back to raw-ish column values.

        Numerics come back as floats on the original scale; categoricals as
        the argmax category. Used for reporting, not round-tripping strings.
        """
        out = {}
        for c in self.codecs:
            block = x[c.start : c.stop]
            if c.kind == NUMERIC:
                out[c.name] = float(c.lo + block[0] * (c.hi - c.lo))
            else:
                out[c.name] = c.categories[int(np.argmax(block))]
        return out


def _parse_numeric(name: str, values: list[str]) -> np.ndarray:
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError as exc:
            raise ParseError(
                f"column {name!r}, row {i + 1}: {v!r} is not numeric"
            ) from exc
        if not np.isfinite(out[i]):
            raise ParseError(f"column {name!r}, row {i + 1}: {v!r} is not finite")
    return out


def fit_encoding(schema: FeatureSchema, header: tuple[str, ...], rows: list[tuple[str, ...]]) -> EncodingSpec:
    col_idx = {name: i for i, name in enumerate(header)}
    codecs = []
    offset = 0
    for name, kind in schema.columns:
        values = [row[col_idx[name]] for row in rows]
        if kind == NUMERIC:
            parsed = _parse_numeric(name, values)
            codec = ColumnCodec(
                name, kind, offset, offset + 1,
                lo=float(parsed.min()), hi=float(parsed.max()),
            )
        else:
            cats = tuple(sorted(set(values)))
            codec = ColumnCodec(name, kind, offset, offset + len(cats), categories=cats)
        codecs.append(codec)
        offset = codec.stop
    return EncodingSpec(tuple(codecs))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable encoded dataset plus enough raw material to export subsets.

    ``group_values`` (the raw sensitive value per row) and
    ``sensitive_categories`` survive drop_sensitive so group metrics remain
    computable on models that no longer see the attribute.
    """

    schema: FeatureSchema
    encoding: EncodingSpec
    row_ids: np.ndarray  # (n,) int64, 1-based CSV positions
    encoded: np.ndarray  # (n, width) float64
    labels: np.ndarray  # (n,) int64 in {0, 1}
    raw_header: tuple[str, ...]
    raw_rows: tuple[tuple[str, ...], ...]
    group_values: tuple[str, ...] | None
    sensitive_categories: tuple[str, str] | None

    def __post_init__(self):
        _readonly(self.row_ids)
        _readonly(self.encoded)
        _readonly(self.labels)

    def __len__(self) -> int:
        return int(self.encoded.shape[0])

    @property
    def width(self) -> int:
        return int(self.encoded.shape[1])

    @property
    def sensitive_block(self) -> slice:
        if self.schema.sensitive is None:
            raise SensitiveAbsent("dataset schema declares no sensitive column")
        return self.encoding.block(self.schema.sensitive)

    def subset(self, indices: np.ndarray) -> "Dataset":
        """New Dataset holding the rows at ``indices`` (positional), in order."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            row_ids=self.row_ids[idx].copy(),
            encoded=self.encoded[idx].copy(),
            labels=self.labels[idx].copy(),
            raw_rows=tuple(self.raw_rows[i] for i in idx),
            group_values=None if self.group_values is None
            else tuple(self.group_values[i] for i in idx),
        )

    def without_row_ids(self, drop) -> "Dataset":
        drop_arr = np.asarray(sorted(drop), dtype=np.int64)
        keep = np.flatnonzero(~np.isin(self.row_ids, drop_arr))
        return self.subset(keep)

    def reencode(self) -> np.ndarray:
        """Re-run the frozen encoding over this subset's raw rows."""
        return self.encoding.encode_rows(self.raw_header, list(self.raw_rows))

    def to_csv(self, path: str | Path) -> None:
        """Write raw rows with original values, prefixed by row_id."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("row_id",) + self.raw_header)
            for rid, row in zip(self.row_ids, self.raw_rows):
                w.writerow((int(rid),) + row)


def load_dataset(path: str | Path, schema: FeatureSchema) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise EmptyDataset(f"{path} has no header row") from None
        rows = [tuple(r) for r in reader]

    expected = set(schema.feature_names) | {schema.label}
    got = set(header)
    if len(header) != len(got):
        raise SchemaMismatch(f"duplicate columns in CSV header: {header}")
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise SchemaMismatch(
            f"CSV header does not match schema (missing={missing}, extra={extra})"
        )
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"row {i + 1} has {len(row)} cells, expected {len(header)}")
    if not rows:
        raise EmptyDataset(f"{path} contains a header but no rows")

    col_idx = {name: i for i, name in enumerate(header)}
    raw_labels = [row[col_idx[schema.label]] for row in rows]
    distinct = sorted(set(raw_labels))
    if schema.positive_label not in distinct:
        raise LabelError(
            f"positive label {schema.positive_label!r} never occurs "
            f"(observed values: {distinct})"
        )
    negatives = [v for v in distinct if v != schema.positive_label]
    if len(negatives) > 1:
        raise LabelError(f"label column has more than two values: {distinct}")
    labels = np.fromiter(
        (1 if v == schema.positive_label else 0 for v in raw_labels),
        dtype=np.int64, count=len(raw_labels),
    )

    encoding = fit_encoding(schema, header, rows)
    encoded = encoding.encode_rows(header, rows)

    group_values = None
    sensitive_categories = None
    if schema.sensitive is not None:
        codec = encoding.codec(schema.sensitive)
        if len(codec.categories) != 2:
            raise SchemaMismatch(
                f"sensitive column {schema.sensitive!r} must take exactly 2 "
                f"values, found {codec.categories}"
            )
        sensitive_categories = codec.categories
        group_values = tuple(row[col_idx[schema.sensitive]] for row in rows)

    return Dataset(
        schema=schema,
        encoding=encoding,
        row_ids=np.arange(1, len(rows) + 1, dtype=np.int64),
        encoded=encoded,
        labels=labels,
        raw_header=header,
        raw_rows=tuple(rows),
        group_values=group_values,
        sensitive_categories=sensitive_categories,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic permutation split: first floor(frac*n) rows train."""

    permutation_seed: int
    train_fraction: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise RangeError(
                f"train_fraction must lie strictly in (0, 1), got {self.train_fraction}"
            )


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    if len(d) == 0:
        raise EmptyDataset("cannot split an empty dataset")
    rng = np.random.default_rng(spec.permutation_seed)
    perm = rng.permutation(len(d))
    n_train = int(np.floor(spec.train_fraction * len(d)))
    return d.subset(perm[:n_train]), d.subset(perm[n_train:])


def drop_sensitive(d: Dataset) -> Dataset:
    """Remove the sensitive column from the feature space (not from raw rows).

    The result's schema declares no sensitive column; encoded width shrinks by
    the one-hot block. group_values / sensitive_categories are retained so
    group metrics still work on the result.
    """
    if d.schema.sensitive is None:
        raise SensitiveAbsent("dataset schema declares no sensitive column")
    name = d.schema.sensitive
    block = d.sensitive_block

    new_schema = FeatureSchema(
        columns=tuple(c for c in d.schema.columns if c[0] != name),
        sensitive=None,
        label=d.schema.label,
        positive_label=d.schema.positive_label,
    )
    codecs = []
    offset = 0
    for c in d.encoding.codecs:
        if c.name == name:
            continue
        codecs.append(replace(c, start=offset, stop=offset + c.width))
        offset += c.width
    keep = np.r_[0 : block.start, block.stop : d.width]
    return replace(
        d,
        schema=new_schema,
        encoding=EncodingSpec(tuple(codecs)),
        encoded=d.encoded[:, keep].copy(),
    )


def kept_columns_after_drop(d: Dataset) -> np.ndarray:
    """Indices into d's full-width vectors that survive drop_sensitive(d)."""
    block = d.sensitive_block
    return np.r_[0 : block.start, block.stop : d.width]
