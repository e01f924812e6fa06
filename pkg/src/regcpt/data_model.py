"""Core data containers: datasets, coordinate groups, search grids, segments."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable regression sample: response ``y`` (n,) and design ``X`` (n, p)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = _frozen(np.asarray(self.y))
        X = _frozen(np.asarray(self.X))
        if X.ndim != 2 or y.ndim != 1:
            raise DataError("y must be 1-d and X 2-d")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"y has {y.shape[0]} rows, X has {X.shape[0]}")
        if X.shape[0] < 4:
            raise DataError(f"need at least 4 rows, got {X.shape[0]}")
        if X.shape[1] < 1:
            raise DataError("X needs at least one column")
        if not np.isfinite(y).all() or not np.isfinite(X).all():
            raise DataError("non-finite values in data")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def view(self, lo: int, hi: int) -> "SegmentView":
        return SegmentView(self, lo, hi)


@dataclass(frozen=True)
class SegmentView:
    """Rows lo+1 .. hi of a dataset (1-based row semantics, lo exclusive)."""

    parent: Dataset
    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo < self.hi <= self.parent.n):
            raise DataError(f"bad segment bounds ({self.lo}, {self.hi}] for n={self.parent.n}")

    @property
    def length(self) -> int:
        return self.hi - self.lo

    @property
    def y(self) -> np.ndarray:
        return self.parent.y[self.lo:self.hi]

    @property
    def X(self) -> np.ndarray:
        return self.parent.X[self.lo:self.hi]

    def covariance(self) -> np.ndarray:
        """Segment second-moment matrix (1/len) * sum_i X_i X_i'."""
        X = self.X
        return (X.T @ X) / self.length

    def dataset(self) -> Dataset:
        return Dataset(y=self.y.copy(), X=self.X.copy())


@dataclass(frozen=True)
class SubGroup:
    """A set of coordinate indices, 1-based, within [1, p]."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if not idx:
            raise ConfigError("group must be non-empty")
        if idx[0] < 1:
            raise ConfigError(f"group indices are 1-based, got {idx[0]}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, p: int) -> "SubGroup":
        return cls(tuple(range(1, p + 1)))

    @classmethod
    def parse(cls, text: str) -> "SubGroup":
        """Parse "1,2,5-9" range syntax (1-based, inclusive ranges)."""
        out = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if "-" in chunk:
                a, _, b = chunk.partition("-")
                try:
                    lo, hi = int(a), int(b)
                except ValueError:
                    raise ConfigError(f"bad group range {chunk!r}")
                if lo > hi:
                    raise ConfigError(f"empty group range {chunk!r}")
                out.extend(range(lo, hi + 1))
            else:
                try:
                    out.append(int(chunk))
                except ValueError:
                    raise ConfigError(f"bad group index {chunk!r}")
        if not out:
            raise ConfigError(f"empty group spec {text!r}")
        return cls(tuple(out))

    def complement(self, p: int) -> "SubGroup":
        mine = set(self.indices)
        rest = tuple(i for i in range(1, p + 1) if i not in mine)
        if not rest:
            raise ConfigError("complement group is empty")
        return SubGroup(rest)

    def validate(self, p: int) -> None:
        if self.indices[-1] > p:
            raise ConfigError(f"group index {self.indices[-1]} exceeds p={p}")

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64) - 1

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class SearchGrid:
    """Candidate split points k in [floor(n*tau0), n - floor(n*tau0)]."""

    n: int
    tau0: float
    stride: int
    points: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.points)

    def index_of(self, k: int) -> int:
        i = int(np.searchsorted(self.points, k))
        if i >= len(self.points) or self.points[i] != k:
            raise ConfigError(f"k={k} is not a grid point")
        return i


def build_grid(n: int, tau0: float, stride: int = 1) -> SearchGrid:
    """Build the trimmed split-point grid.

    Points run from floor(n*tau0) upward by ``stride``; the last in-range
    point n - floor(n*tau0) is always included even when off-stride.
    """
    if not (0.0 < tau0 < 0.5):
        raise ConfigError(f"tau0 must lie in (0, 0.5), got {tau0}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    k_lo = int(math.floor(n * tau0))
    if k_lo < 2:
        raise ConfigError(
            f"floor(n*tau0) = {k_lo} < 2; both segments must admit regression"
        )
    k_hi = n - k_lo
    if k_hi < k_lo:
        raise ConfigError(f"empty grid for n={n}, tau0={tau0}")
    pts = list(range(k_lo, k_hi + 1, stride))
    if pts[-1] != k_hi:
        pts.append(k_hi)
    points = _frozen(np.asarray(pts, dtype=np.float64)).astype(np.int64)
    points.flags.writeable = False
    return SearchGrid(n=n, tau0=float(tau0), stride=int(stride), points=points)


def load_csv(path: str, response_column, header: bool = True) -> Dataset:
    """Load a UTF-8 comma-separated numeric file into a Dataset.

    ``response_column`` selects y by header name or 1-based position.
    Remaining columns become X in file order.  Any non-numeric, NaN, or
    infinite cell is rejected with its row and column named.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: empty file")

    names = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    ncol = len(rows[0])
    if ncol < 2:
        raise DataError(f"{path}: need a response column plus at least one predictor")

    if isinstance(response_column, str):
        if names is None:
            raise DataError(f"{path}: column name {response_column!r} given but file has no header")
        if response_column not in names:
            raise DataError(f"{path}: response column {response_column!r} not found")
        rcol = names.index(response_column)
    else:
        rcol = int(response_column) - 1
        if not (0 <= rcol < ncol):
            raise DataError(f"{path}: response column {response_column} out of range 1..{ncol}")

    first_data_line = 2 if header else 1
    data = np.empty((len(rows), ncol), dtype=np.float64)
    for i, row in enumerate(rows):
        line = first_data_line + i
        if len(row) != ncol:
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {ncol}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {line}, column {j + 1}: not a number: {cell!r}")
            if not math.isfinite(v):
                raise DataError(f"{path}: row {line}, column {j + 1}: non-finite value {cell!r}")
            data[i, j] = v

    if data.shape[0] < 4:
        raise DataError(f"{path}: need at least 4 rows, got {data.shape[0]}")
    y = data[:, rcol]
    X = np.delete(data, rcol, axis=1)
    return Dataset(y=y, X=X)
