"""Tabular data model, CSV ingestion, reference normalization, binarization and distances."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_label_vector, as_matrix, check_same_width
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    MissingColumn,
    ParseError,
    SchemaMismatch,
    UnlabeledDataset,
    ValidationError,
    ZeroVector,
)

CONTINUOUS = "continuous"
BINARY = "binary"


def _infer_kind(column: np.ndarray) -> str:
    return BINARY if np.isin(column, (0.0, 1.0)).all() else CONTINUOUS


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularDataset:
    """N rows of M named real-valued features with optional binary labels.

    ``kinds`` holds ``"continuous"`` or ``"binary"`` per column and is inferred
    when omitted. Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    feature_names: tuple
    y: Optional[np.ndarray] = None
    kinds: Optional[tuple] = None
    name: str = "dataset"
    label_name: Optional[str] = None

    def __post_init__(self):
        X = as_matrix(self.X, name=self.name)
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DimensionMismatch(
                f"{self.name}: {len(names)} feature names for {X.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise ValidationError(f"{self.name}: duplicate feature names")
        kinds = self.kinds
        if kinds is None:
            kinds = tuple(_infer_kind(X[:, j]) for j in range(X.shape[1]))
        else:
            kinds = tuple(kinds)
            if len(kinds) != X.shape[1]:
                raise DimensionMismatch(f"{self.name}: kinds length does not match columns")
            for j, k in enumerate(kinds):
                if k not in (CONTINUOUS, BINARY):
                    raise ValidationError(f"unknown column kind {k!r}")
                if k == BINARY and not np.isin(X[:, j], (0.0, 1.0)).all():
                    raise ValidationError(f"binary column {names[j]!r} holds values outside {{0, 1}}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "kinds", kinds)
        if self.y is not None:
            y = as_label_vector(self.y, n_rows=X.shape[0], name=self.name)
            object.__setattr__(self, "y", _frozen(y))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([k == BINARY for k in self.kinds], dtype=bool)

    def require_labels(self) -> np.ndarray:
        if self.y is None:
            raise UnlabeledDataset(f"{self.name} has no labels")
        return self.y

    def subset(self, rows, name: Optional[str] = None) -> "TabularDataset":
        rows = np.asarray(rows)
        return TabularDataset(
            self.X[rows],
            self.feature_names,
            y=None if self.y is None else self.y[rows],
            kinds=self.kinds,
            name=name or self.name,
            label_name=self.label_name,
        )

    def replace(self, **changes) -> "TabularDataset":
        fields = dict(
            X=self.X,
            feature_names=self.feature_names,
            y=self.y,
            kinds=self.kinds,
            name=self.name,
            label_name=self.label_name,
        )
        fields.update(changes)
        return TabularDataset(**fields)

    def column(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise MissingColumn(f"{self.name} has no column {name!r}") from None


def concat(datasets: Sequence[TabularDataset], name: str = "concat") -> TabularDataset:
    first = datasets[0]
    for d in datasets[1:]:
        if d.feature_names != first.feature_names:
            raise SchemaMismatch(f"cannot concatenate {d.name} onto {first.name}: columns differ")
    labeled = all(d.labeled for d in datasets)
    X = np.vstack([d.X for d in datasets])
    y = np.concatenate([d.y for d in datasets]) if labeled else None
    kinds = tuple(
        BINARY if all(d.kinds[j] == BINARY for d in datasets) else CONTINUOUS
        for j in range(first.n_features)
    )
    return TabularDataset(X, first.feature_names, y=y, kinds=kinds, name=name, label_name=first.label_name)


# --------------------------------------------------------------------------- CSV


def load_csv(path, label_column: Optional[str] = None, name: Optional[str] = None) -> TabularDataset:
    """Read a headered, comma-separated numeric file.

    Sentinel values such as ``-8`` are kept as numbers. Empty or non-numeric
    cells raise ``ParseError`` naming the 1-based data row and the column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        rows = []
        for lineno, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"{path}: row {lineno} has {len(record)} cells, header has {len(header)}",
                    row=lineno,
                )
            values = []
            for col, cell in zip(header, record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r} as a number",
                        row=lineno,
                        column=col,
                    ) from None
                if math.isnan(v):
                    raise ParseError(
                        f"{path}: row {lineno}, column {col!r}: missing value", row=lineno, column=col
                    )
                values.append(v)
            rows.append(values)
    if not rows:
        raise EmptyDataset(f"{path} has a header but no rows")
    data = np.array(rows, dtype=float)
    y = None
    names = list(header)
    if label_column is not None:
        if label_column not in header:
            raise MissingColumn(f"{path}: label column {label_column!r} not in header {header}")
        j = header.index(label_column)
        y = data[:, j]
        data = np.delete(data, j, axis=1)
        del names[j]
    return TabularDataset(data, tuple(names), y=y, name=name or path.stem, label_name=label_column)


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_csv(data: TabularDataset, path) -> None:
    header = list(data.feature_names)
    if data.labeled:
        header.append(data.label_name or "label")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n_rows):
            row = [_fmt(v) for v in data.X[i]]
            if data.labeled:
                row.append(_fmt(data.y[i]))
            w.writerow(row)


# ----------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormalizationStats:
    """Per-column z-score statistics taken from a reference dataset.

    Binary and zero-variance columns are pass-through: ``passthrough[j]`` is
    True and their mean/std are stored as 0 and 1.
    """

    feature_names: tuple
    mean: np.ndarray
    std: np.ndarray
    passthrough: np.ndarray
    zero_variance: tuple = ()
    reference: str = ""

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "columns": [
                {
                    "name": n,
                    "mean": float(m),
                    "std": float(s),
                    "passthrough": bool(p),
                    "zero_variance": n in self.zero_variance,
                }
                for n, m, s, p in zip(self.feature_names, self.mean, self.std, self.passthrough)
            ],
        }


class ReferenceScaler(TransformerMixin, BaseEstimator):
    """Z-score columns with statistics of a reference sample.

    Uses the population standard deviation (divide by N). Columns listed in
    ``binary_mask`` and constant columns pass through unchanged.
    """

    def __init__(self, binary_mask=None):
        self.binary_mask = binary_mask

    def fit(self, X, y=None):
        X = as_matrix(X, name="reference")
        if X.shape[0] < 2:
            raise EmptyDataset("normalization needs at least 2 reference rows")
        if self.binary_mask is None:
            binary = np.array([_infer_kind(X[:, j]) == BINARY for j in range(X.shape[1])])
        else:
            binary = np.asarray(self.binary_mask, dtype=bool)
            check_same_width(binary.shape[0], X.shape[1], "binary_mask")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        zero_var = (~binary) & (std == 0)
        if zero_var.any():
            warnings.warn(
                f"{int(zero_var.sum())} zero-variance column(s) left unnormalized", RuntimeWarning
            )
        passthrough = binary | zero_var
        self.mean_ = np.where(passthrough, 0.0, mean)
        self.scale_ = np.where(passthrough, 1.0, std)
        self.passthrough_ = passthrough
        self.zero_variance_ = zero_var
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = as_matrix(X)
        check_same_width(X.shape[1], self.n_features_in_, "X")
        out = (X - self.mean_) / self.scale_
        out[:, self.passthrough_] = X[:, self.passthrough_]
        return out

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = as_matrix(X)
        check_same_width(X.shape[1], self.n_features_in_, "X")
        out = X * self.scale_ + self.mean_
        out[:, self.passthrough_] = X[:, self.passthrough_]
        return out


def fit_normalizer(reference: TabularDataset) -> NormalizationStats:
    scaler = ReferenceScaler(binary_mask=reference.binary_mask).fit(reference.X)
    names = reference.feature_names
    return NormalizationStats(
        feature_names=names,
        mean=_frozen(scaler.mean_),
        std=_frozen(scaler.scale_),
        passthrough=_frozen(scaler.passthrough_),
        zero_variance=tuple(n for n, z in zip(names, scaler.zero_variance_) if z),
        reference=reference.name,
    )


def _scaler_from(stats: NormalizationStats) -> ReferenceScaler:
    s = ReferenceScaler(binary_mask=stats.passthrough)
    s.mean_, s.scale_ = np.asarray(stats.mean), np.asarray(stats.std)
    s.passthrough_ = np.asarray(stats.passthrough)
    s.zero_variance_ = np.array([n in stats.zero_variance for n in stats.feature_names])
    s.n_features_in_ = len(stats.feature_names)
    return s


def _check_columns(stats: NormalizationStats, data: TabularDataset):
    if tuple(stats.feature_names) != tuple(data.feature_names):
        raise SchemaMismatch(
            f"{data.name} columns {list(data.feature_names)} do not match "
            f"normalizer columns {list(stats.feature_names)}"
        )


def apply_normalizer(stats: NormalizationStats, data: TabularDataset) -> TabularDataset:
    _check_columns(stats, data)
    return data.replace(X=_scaler_from(stats).transform(data.X))


def invert_normalizer(stats: NormalizationStats, data: TabularDataset) -> TabularDataset:
    _check_columns(stats, data)
    return data.replace(X=_scaler_from(stats).inverse_transform(data.X))


# ------------------------------------------------------------------ binarization


@dataclass(frozen=True)
class BinarizationScheme:
    """Ordered ``(source column, threshold)`` pairs; derived column is ``x <= t``.

    ``passthrough`` lists source columns that are already binary and are copied
    as-is. Output columns follow source-column order.
    """

    source_names: tuple
    thresholds: tuple  # ((column name, threshold), ...)
    passthrough: tuple = ()

    @property
    def output_names(self) -> tuple:
        names = []
        for col in self.source_names:
            if col in self.passthrough:
                names.append(col)
            names.extend(f"{c} <= {_fmt(t)}" for c, t in self.thresholds if c == col)
        return tuple(names)

    @property
    def output_sources(self) -> tuple:
        """Index of the source column behind every output column."""
        out = []
        for j, col in enumerate(self.source_names):
            if col in self.passthrough:
                out.append(j)
            out.extend(j for c, _ in self.thresholds if c == col)
        return tuple(out)

    def transform(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_same_width(X.shape[1], len(self.source_names), "X")
        cols = []
        for j, col in enumerate(self.source_names):
            if col in self.passthrough:
                cols.append(X[:, j])
            cols.extend((X[:, j] <= t).astype(float) for c, t in self.thresholds if c == col)
        if not cols:
            return np.zeros((X.shape[0], 0))
        return np.column_stack(cols)

    def apply(self, data: TabularDataset) -> TabularDataset:
        if tuple(data.feature_names) != tuple(self.source_names):
            raise SchemaMismatch(f"{data.name} columns do not match the binarization scheme")
        Xb = self.transform(data.X)
        return TabularDataset(
            Xb,
            self.output_names,
            y=data.y,
            kinds=(BINARY,) * Xb.shape[1],
            name=data.name,
            label_name=data.label_name,
        )

    def to_dict(self) -> dict:
        return {
            "source_names": list(self.source_names),
            "thresholds": [[c, float(t)] for c, t in self.thresholds],
            "passthrough": list(self.passthrough),
        }


def _entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h)


def threshold_gains(x: np.ndarray, y: np.ndarray):
    """Midpoint thresholds of ``x`` and the information gain of splitting at each."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    # last index of each run of equal values
    boundaries = np.flatnonzero(np.diff(xs) > 0)
    if boundaries.size == 0:
        return np.empty(0), np.empty(0)
    thresholds = (xs[boundaries] + xs[boundaries + 1]) / 2.0
    pos_left = np.cumsum(ys)[boundaries]
    n_left = boundaries + 1.0
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    h_parent = _entropy(np.array([ys.mean()]))[0]
    h_split = (n_left * _entropy(pos_left / n_left) + n_right * _entropy(pos_right / n_right)) / n
    return thresholds, h_parent - h_split


class InfoGainBinarizer(TransformerMixin, BaseEstimator):
    """Supervised thresholding of continuous columns.

    For each continuous column the candidates are midpoints between consecutive
    distinct values; the ``max_thresholds_per_column`` candidates with the
    largest information gain are kept (ties favour the smaller threshold).
    Binary columns pass through.
    """

    def __init__(self, max_thresholds_per_column: int = 3, feature_names=None, binary_mask=None):
        self.max_thresholds_per_column = max_thresholds_per_column
        self.feature_names = feature_names
        self.binary_mask = binary_mask

    def fit(self, X, y):
        if y is None:
            raise UnlabeledDataset("binarization thresholds are chosen against a label")
        if self.max_thresholds_per_column < 1:
            raise ValidationError("max_thresholds_per_column must be >= 1")
        X = as_matrix(X)
        y = as_label_vector(y, n_rows=X.shape[0])
        names = (
            tuple(self.feature_names)
            if self.feature_names is not None
            else tuple(f"x{j}" for j in range(X.shape[1]))
        )
        if self.binary_mask is None:
            binary = [_infer_kind(X[:, j]) == BINARY for j in range(X.shape[1])]
        else:
            binary = list(np.asarray(self.binary_mask, dtype=bool))
        pairs, passthrough = [], []
        for j, col in enumerate(names):
            if binary[j]:
                passthrough.append(col)
                continue
            t, gain = threshold_gains(X[:, j], y)
            if t.size == 0:
                continue
            # lexsort: last key is primary -> descending gain, then ascending threshold
            keep = np.lexsort((t, -np.round(gain, 12)))[: self.max_thresholds_per_column]
            pairs.extend((col, float(v)) for v in np.sort(t[keep]))
        self.scheme_ = BinarizationScheme(tuple(names), tuple(pairs), tuple(passthrough))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scheme_")
        return self.scheme_.transform(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "scheme_")
        return np.array(self.scheme_.output_names, dtype=object)


def fit_binarizer(data: TabularDataset, max_thresholds_per_column: int = 3) -> BinarizationScheme:
    y = data.require_labels()
    b = InfoGainBinarizer(
        max_thresholds_per_column, feature_names=data.feature_names, binary_mask=data.binary_mask
    )
    return b.fit(data.X, y).scheme_


# --------------------------------------------------------------------- distances

METRICS = ("euclidean", "cosine")


def distance(a, b, metric: str = "euclidean") -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vectors of length {a.size} and {b.size}")
    return float(pairwise_distances(a[None, :], b[None, :], metric)[0, 0])


def pairwise_distances(A, B, metric: str = "euclidean") -> np.ndarray:
    """Distance between every row of ``A`` and every row of ``B``.

    Cosine distance against a zero vector is 1 when the other vector is
    nonzero; two zero vectors raise ``ZeroVector``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} columns")
    if metric == "euclidean":
        return cdist(A, B, "euclidean")
    if metric == "cosine":
        na = np.linalg.norm(A, axis=1)
        nb = np.linalg.norm(B, axis=1)
        both_zero = (na[:, None] == 0) & (nb[None, :] == 0)
        if both_zero.any():
            raise ZeroVector("cosine distance between two zero vectors is undefined")
        denom = na[:, None] * nb[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            sim = np.where(denom > 0, (A @ B.T) / denom, 0.0)
        return np.clip(1.0 - sim, 0.0, 2.0)
    raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
