"""Deterministic CSV and JSON writers (UTF-8, LF, 17 significant digits)."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sps


def fmt(x) -> str:
    """Round-trip float formatting; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def atomic_write_text(path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def write_sparsity_csv(path, A) -> Path:
    """Stored nonzeros as ``row,col,value`` in row-major order."""
    coo = sps.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    rows = zip(coo.row[order], coo.col[order], coo.data[order])
    return write_table(path, ["row", "col", "value"], rows)


def write_dense_csv(path, A) -> Path:
    A = A.toarray() if sps.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
    return write_table(path, [f"c{j}" for j in range(A.shape[1])], A)


def read_sparsity_csv(path, shape=None) -> sps.csr_matrix:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    r, c, v = data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2]
    if shape is None:
        shape = (int(r.max()) + 1, int(c.max()) + 1) if r.size else (0, 0)
    return sps.csr_matrix((v, (r, c)), shape=shape)


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
