"""CSV ingestion and preprocessing."""

from __future__ import annotations

import csv
import logging
import math
import os
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, ParseError, SingleClass
from .scatter import Dataset

log = logging.getLogger(__name__)

NULL_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


def _resolve_label_column(header: Sequence[str], label_column: str | int) -> int:
    if isinstance(label_column, int):
        idx = label_column
    elif label_column in header:
        return header.index(label_column)
    else:
        try:
            idx = int(label_column)
        except ValueError:
            raise ParseError(1, str(label_column), str(label_column), "not a column of the header") from None
    if not -len(header) <= idx < len(header):
        raise ParseError(1, str(label_column), str(label_column), "out of range for the header")
    return idx % len(header)


def load_csv(path: str | os.PathLike, label_column: str | int = -1, *, delimiter: str = ",",
             drop_null_rows: bool = False) -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    Labels are mapped to class ids in order of first appearance.  Every other
    column must parse as a finite real; the offending row (1-based, counting the
    header as row 1) and column are reported otherwise.  With ``drop_null_rows``
    rows whose feature cells are all empty or null are skipped instead.

    Raises
    ------
    ParseError, EmptyDataset, SingleClass
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        li = _resolve_label_column(header, label_column)
        names = [h for j, h in enumerate(header) if j != li]
        rows: list[list[float]] = []
        labels: list[int] = []
        classes: dict[str, int] = {}
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(rowno, "*", delimiter.join(row),
                                 f"a row with {len(row)} cells (header has {len(header)})")
            cells = [c.strip() for j, c in enumerate(row) if j != li]
            if drop_null_rows and all(c.lower() in NULL_TOKENS for c in cells):
                log.info("dropping all-null row %d", rowno)
                continue
            values = []
            for name, cell in zip(names, cells):
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(rowno, name, cell) from None
                if not math.isfinite(x):
                    raise ParseError(rowno, name, cell)
                values.append(x)
            label = row[li].strip()
            if label.lower() in NULL_TOKENS:
                raise ParseError(rowno, header[li], label, "a missing label")
            labels.append(classes.setdefault(label, len(classes)))
            rows.append(values)
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    if len(classes) < 2:
        raise SingleClass(f"{path}: only one class ({next(iter(classes))!r}) present")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(X, np.array(labels), tuple(names), tuple(classes))


def write_csv(data: Dataset, path: str | os.PathLike, *, label_name: str = "label", delimiter: str = ",") -> None:
    """Write features and the label column (last) with 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([*data.names, label_name])
        for x, y in zip(data.features, data.labels):
            w.writerow([format(v, ".17g") for v in x] + [data.class_names[y]])


def standardize(data: Dataset) -> Dataset:
    """Zero-mean, unit sample-variance columns.

    Constant columns become all zeros and are listed in ``constant_columns``.
    """
    X = data.features
    mean = X.mean(axis=0)
    centered = X - mean
    sd = np.sqrt(np.einsum("ij,ij->j", centered, centered) / max(data.n - 1, 1))
    constant = np.ptp(X, axis=0) == 0
    sd = np.where(constant | (sd == 0), 1.0, sd)
    Z = centered / sd
    Z[:, constant] = 0.0
    flagged = tuple(int(j) for j in np.flatnonzero(constant))
    if flagged:
        log.warning("constant columns left at zero: %s", [data.names[j] for j in flagged])
    return data.with_features(Z, constant_columns=flagged)


def add_jitter(data: Dataset, sigma: float, seed: int | None = 0) -> Dataset:
    """Add i.i.d. Gaussian noise; a workaround for exactly singular scatter."""
    if sigma <= 0:
        return data
    rng = np.random.default_rng(seed)
    return data.with_features(data.features + rng.normal(0.0, sigma, size=data.features.shape))
