"""Instance file formats.

Matrices are stored either in Matrix Market coordinate format (1-based
indices, ``%%MatrixMarket matrix coordinate real general`` header) or as
CSV triplets ``i,j,value`` with 0-based indices and a ``rows,cols,nnz``
header line. Budgets live in a sidecar text file, one value per line.

A Fisher instance saved under prefix P produces ``P.u.mtx`` (or ``.u.csv``)
plus ``P.w.txt``; an exchange instance produces ``P.u.*`` plus ``P.e.*``.
Values are written with 17 significant digits so a save/load round trip is
exact.
"""

import os

import numpy as np

from .errors import ParseError, StructureError
from .instance import ExchangeInstance, FisherInstance
from .sparse import SparseMatrix

FORMATS = ("mtx", "csv")

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def write_matrix_market(M, path):
    with open(path, "w") as fh:
        fh.write(_MM_HEADER + "\n")
        fh.write(f"{M.n_rows} {M.n_cols} {M.nnz}\n")
        rows = M.row_ids
        for r, c, v in zip(rows, M.col_indices, M.values):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def read_matrix_market(path):
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", path=path)
    header = lines[0].strip().lower()
    if not header.startswith("%%matrixmarket"):
        raise ParseError("missing MatrixMarket header", path=path, line=1)
    fields = header.split()
    if fields[1:5] != ["matrix", "coordinate", "real", "general"]:
        raise ParseError("only 'matrix coordinate real general' is supported",
                         path=path, line=1)
    idx = 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    if idx >= len(lines):
        raise ParseError("missing size line", path=path, line=len(lines))
    parts = lines[idx].split()
    if len(parts) != 3:
        raise ParseError("size line must be 'rows cols nnz'", path=path, line=idx + 1)
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise ParseError("size line must contain three integers", path=path, line=idx + 1)
    rows = np.zeros(nnz, dtype=np.int64)
    cols = np.zeros(nnz, dtype=np.int64)
    vals = np.zeros(nnz, dtype=np.float64)
    k = 0
    for lineno in range(idx + 1, len(lines)):
        line = lines[lineno].strip()
        if not line or line.startswith("%"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError("entry line must be 'i j value'", path=path, line=lineno + 1)
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", path=path,
                             line=lineno + 1)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("malformed entry", path=path, line=lineno + 1)
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise ParseError(f"index ({i},{j}) outside {n_rows}x{n_cols}",
                             path=path, line=lineno + 1)
        if v < 0:
            raise ParseError(f"negative value {v!r}", path=path, line=lineno + 1)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries but found {k}", path=path,
                         line=len(lines))
    return SparseMatrix.from_triplets(n_rows, n_cols, rows, cols, vals)


def write_csv_triplets(M, path):
    with open(path, "w") as fh:
        fh.write(f"{M.n_rows},{M.n_cols},{M.nnz}\n")
        rows = M.row_ids
        for r, c, v in zip(rows, M.col_indices, M.values):
            fh.write(f"{r},{c},{v:.17g}\n")


def read_csv_triplets(path):
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", path=path)
    parts = lines[0].strip().split(",")
    if len(parts) != 3:
        raise ParseError("header must be 'rows,cols,nnz'", path=path, line=1)
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise ParseError("header must contain three integers", path=path, line=1)
    rows = np.zeros(nnz, dtype=np.int64)
    cols = np.zeros(nnz, dtype=np.int64)
    vals = np.zeros(nnz, dtype=np.float64)
    k = 0
    for lineno in range(1, len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError("entry line must be 'i,j,value'", path=path, line=lineno + 1)
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", path=path,
                             line=lineno + 1)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("malformed entry", path=path, line=lineno + 1)
        if not (0 <= i < n_rows and 0 <= j < n_cols):
            raise ParseError(f"index ({i},{j}) outside {n_rows}x{n_cols}",
                             path=path, line=lineno + 1)
        if v < 0:
            raise ParseError(f"negative value {v!r}", path=path, line=lineno + 1)
        rows[k], cols[k], vals[k] = i, j, v
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries but found {k}", path=path,
                         line=len(lines))
    return SparseMatrix.from_triplets(n_rows, n_cols, rows, cols, vals)


def write_budgets(w, path):
    with open(path, "w") as fh:
        for v in w:
            fh.write(f"{v:.17g}\n")


def read_budgets(path):
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise ParseError("budget lines must hold one real number",
                                 path=path, line=lineno)
    return np.asarray(vals, dtype=np.float64)


def _matrix_io(fmt):
    if fmt == "mtx":
        return write_matrix_market, read_matrix_market
    if fmt == "csv":
        return write_csv_triplets, read_csv_triplets
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def save(inst, prefix, fmt="mtx"):
    """Write an instance under a path prefix; returns the files written."""
    writer, _ = _matrix_io(fmt)
    paths = [f"{prefix}.u.{fmt}"]
    writer(inst.utilities, paths[0])
    if isinstance(inst, FisherInstance):
        paths.append(f"{prefix}.w.txt")
        write_budgets(inst.budgets, paths[-1])
    elif isinstance(inst, ExchangeInstance):
        paths.append(f"{prefix}.e.{fmt}")
        writer(inst.endowments, paths[-1])
    else:
        raise TypeError(f"unsupported instance type {type(inst)!r}")
    return paths


def load(prefix, fmt="mtx"):
    """Load a Fisher or exchange instance saved under a path prefix.

    The kind is inferred from which sidecar exists: ``.w.txt`` means Fisher,
    ``.e.<fmt>`` means exchange.
    """
    _, reader = _matrix_io(fmt)
    u_path = f"{prefix}.u.{fmt}"
    if not os.path.exists(u_path):
        raise ParseError(f"no utility matrix at {u_path}", path=u_path)
    utilities = reader(u_path)
    w_path = f"{prefix}.w.txt"
    e_path = f"{prefix}.e.{fmt}"
    if os.path.exists(w_path):
        budgets = read_budgets(w_path)
        if budgets.shape != (utilities.n_rows,):
            raise StructureError(
                f"{w_path} holds {len(budgets)} budgets but U has "
                f"{utilities.n_rows} rows")
        return FisherInstance(utilities, budgets)
    if os.path.exists(e_path):
        endowments = reader(e_path)
        return ExchangeInstance(utilities, endowments)
    raise ParseError(f"neither {w_path} nor {e_path} exists", path=prefix)
