"""Strict numeric CSV input and shortest-representation output.

Data files are plain rectangular CSVs with an optional single header row.
Floats are written with repr(), the shortest string that round-trips to
the identical double, so write -> load is bit-exact and byte-stable.
"""

import csv
import os

import numpy as np

from .errors import DataError


def load_table(path):
    """Parse a numeric CSV; returns (matrix, column names or None).

    The first row is treated as a header iff any of its cells fails to
    parse as a float.  Ragged rows and non-numeric body cells are errors
    that name the offending line.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh))]
    rows = [(ln, row) for ln, row in rows if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: empty table")
    names = None
    first_ln, first = rows[0]
    if not _all_numeric(first):
        names = [c.strip() for c in first]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    width = len(rows[0][1])
    if names is not None and len(names) != width:
        raise DataError(f"{path}: line {rows[0][0]}: {width} cells, header has {len(names)}")
    data = np.empty((len(rows), width))
    for r, (ln, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: line {ln}: expected {width} cells, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {ln}: non-numeric cell {cell.strip()!r}"
                ) from None
    return data, names


def _all_numeric(row):
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return False
    return True


def format_value(v):
    """Shortest round-tripping representation of a scalar cell."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, data, names=None):
    """Write a matrix (or list of rows) as CSV with stable float formatting."""
    data = np.atleast_2d(np.asarray(data))
    with open(path, "w", newline="\n") as fh:
        if names is not None:
            fh.write(",".join(str(n) for n in names) + "\n")
        for row in data:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_report(path, header, rows):
    """CSV for report rows that may mix strings and numbers."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
