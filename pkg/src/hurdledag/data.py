"""Rectangular datasets with exact-zero semantics and CSV round-tripping.

Zeros are meaningful here: an entry is treated as "zero" iff it is exactly
0.0.  The CSV writer therefore emits the literal ``0`` for zeros and the
shortest round-trip decimal (``repr``) otherwise, so a write/read cycle is
bit-stable.  Rounding almost-zeros to exact zeros is an explicit ingestion
step, never implicit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["Dataset"]


@dataclass(frozen=True)
class Dataset:
    """Immutable (n, m) float matrix with one label per column."""

    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-d, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != v.shape[1]:
            raise ValueError(f"{len(self.labels)} labels for {v.shape[1]} columns")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("column labels must be unique")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def select(self, labels: Sequence[str]) -> "Dataset":
        """Subset and reorder columns by label."""
        idx = [self.labels.index(l) for l in labels]
        return Dataset(self.values[:, idx], tuple(labels))

    def round_zeros(self, tol: float) -> "Dataset":
        """Snap entries with |v| <= tol to exact 0.0."""
        if tol < 0:
            raise ValueError("tolerance must be nonnegative")
        v = self.values.copy()
        v[np.abs(v) <= tol] = 0.0
        return Dataset(v, self.labels)

    # -- CSV ------------------------------------------------------------------

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.labels)
        for row in self.values:
            w.writerow(["0" if x == 0.0 else repr(float(x)) for x in row])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_string())

    @classmethod
    def from_csv_string(cls, text: str, zero_tol: float = 0.0) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        labels = tuple(rows[0])
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        if data.size == 0:
            data = data.reshape(0, len(labels))
        ds = cls(data, labels)
        return ds.round_zeros(zero_tol) if zero_tol > 0 else ds

    @classmethod
    def from_csv(cls, path, zero_tol: float = 0.0) -> "Dataset":
        with open(path, newline="") as fh:
            return cls.from_csv_string(fh.read(), zero_tol=zero_tol)
