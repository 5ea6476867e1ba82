"""Deterministic CSV/JSON emission and small file readers.

CSV output follows RFC-4180 (comma separated, CRLF line ends, minimal
quoting) and writes floats in shortest round-trip form so that identical
inputs always give byte-identical files.
"""

import csv
import io
import json
import math
import os

import numpy as np


def format_value(value):
    """Render one cell: shortest round-trip floats, plain ints and strings."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def csv_text(header, rows):
    """Return the CSV document for ``header`` and ``rows`` as a string."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    """Write rows to ``path`` as UTF-8 RFC-4180 CSV."""
    text = csv_text(header, rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(path):
    """Read a CSV file with a header row.

    Returns
    -------
    header : list of str
    rows : list of list of str
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV file") from None
        rows = [r for r in reader if r]
    return header, rows


def write_matrix_csv(path, matrix, prefix="c"):
    """Write a 2-D array with generated column names ``c_1..c_k``."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    header = [f"{prefix}_{j + 1}" for j in range(matrix.shape[1])]
    write_csv(path, header, matrix.tolist())


def read_matrix_csv(path):
    """Read a numeric matrix from CSV; a non-numeric first row is a header."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty CSV file")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{path}: expected a non-empty rectangular matrix")
    return arr


def json_text(obj):
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json_text(obj))


def _plain(obj):
    # numpy scalars and arrays -> builtin types for json
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
