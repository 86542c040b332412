"""Row-compressed sparse storage and the kernels the solvers are built on.

The solvers never form dense matrices: everything reduces to row dot
products, column-sum accumulation, transpose applies, and a power-iteration
operator-norm estimate. Column sums follow a fixed per-column accumulation
order (ascending row index) so results are bit-identical regardless of
thread count.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StructureError


@dataclass
class RowView:
    """One matrix row: parallel slices of column indices and values."""

    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.col_indices) != len(self.values):
            raise StructureError("row view index/value length mismatch")


class SparseMatrix:
    """Immutable CSR matrix with nonnegative values and no explicit zeros.

    Parameters
    ----------
    n_rows, n_cols : int
        Matrix shape.
    row_offsets : int64 array, length n_rows + 1
        Nondecreasing offsets into ``col_indices``/``values``.
    col_indices : int64 array
        Strictly increasing within each row, all < n_cols.
    values : float64 array
        Strictly positive (zeros must be dropped before construction).
    """

    __slots__ = (
        "n_rows", "n_cols", "row_offsets", "col_indices", "values",
        "_row_ids", "_tperm", "_tindptr",
    )

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values):
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if n_rows < 0 or n_cols < 0:
            raise StructureError("negative dimensions")
        if row_offsets.shape != (n_rows + 1,):
            raise StructureError("row_offsets must have length n_rows+1")
        if row_offsets[0] != 0 or row_offsets[-1] != len(values):
            raise StructureError("row_offsets endpoints are inconsistent")
        if np.any(np.diff(row_offsets) < 0):
            raise StructureError("row_offsets must be nondecreasing")
        if len(col_indices) != len(values):
            raise StructureError("col_indices/values length mismatch")
        if len(col_indices):
            if col_indices.min() < 0 or col_indices.max() >= n_cols:
                raise StructureError("column index out of range")
            row_ids = np.repeat(np.arange(n_rows), np.diff(row_offsets))
            same_row = row_ids[:-1] == row_ids[1:]
            if np.any(same_row & (np.diff(col_indices) <= 0)):
                raise StructureError("column indices not strictly increasing in a row")
            self._row_ids = row_ids
        else:
            self._row_ids = np.zeros(0, dtype=np.int64)
        if np.any(values < 0):
            raise StructureError("negative value stored")
        if np.any(values == 0):
            raise StructureError("explicit zero stored; drop zeros before construction")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = row_offsets
        self.col_indices = col_indices
        self.values = values
        self._tperm = None
        self._tindptr = None
        for arr in (self.row_offsets, self.col_indices, self.values, self._row_ids):
            arr.setflags(write=False)

    @classmethod
    def from_triplets(cls, n_rows, n_cols, rows, cols, vals):
        """Build from COO triplets; zero entries are dropped, duplicates rejected."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise StructureError("triplet arrays differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise StructureError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise StructureError("column index out of range")
        if np.any(vals < 0):
            raise StructureError("negative value in triplets")
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1 and np.any((rows[:-1] == rows[1:]) & (cols[:-1] == cols[1:])):
            raise StructureError("duplicate entry in triplets")
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, cols, vals)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_triplets(dense.shape[0], dense.shape[1], rows, cols, dense[rows, cols])

    @property
    def nnz(self):
        return len(self.values)

    @property
    def row_ids(self):
        """Row index of every stored entry (length nnz)."""
        return self._row_ids

    def row(self, i):
        a, b = self.row_offsets[i], self.row_offsets[i + 1]
        return RowView(self.col_indices[a:b], self.values[a:b])

    def transpose_schedule(self):
        """Column-grouped entry permutation: (tperm, tindptr).

        ``tperm[tindptr[j]:tindptr[j+1]]`` lists the storage positions of
        column j's entries in ascending row order; this is the fixed
        accumulation schedule for all column reductions.
        """
        if self._tperm is None:
            tperm = np.argsort(self.col_indices, kind="stable").astype(np.int64)
            tindptr = np.zeros(self.n_cols + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.col_indices, minlength=self.n_cols), out=tindptr[1:])
            tperm.setflags(write=False)
            tindptr.setflags(write=False)
            self._tperm = tperm
            self._tindptr = tindptr
        return self._tperm, self._tindptr

    def apply(self, dense):
        """Matrix-vector product M @ dense."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != (self.n_cols,):
            raise StructureError("vector length does not match n_cols")
        return np.bincount(self._row_ids, weights=self.values * dense[self.col_indices],
                           minlength=self.n_rows)

    def apply_transpose(self, dense):
        """Matrix-vector product M.T @ dense, accumulated in the fixed column order."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != (self.n_rows,):
            raise StructureError("vector length does not match n_rows")
        return np.bincount(self.col_indices, weights=self.values * dense[self._row_ids],
                           minlength=self.n_cols)

    def row_sums(self, entry_values):
        """Per-row sums of an entry-aligned value array."""
        entry_values = np.asarray(entry_values, dtype=np.float64)
        if entry_values.shape != (self.nnz,):
            raise StructureError("entry value array does not match nnz")
        return np.bincount(self._row_ids, weights=entry_values, minlength=self.n_rows)

    def column_counts(self):
        return np.bincount(self.col_indices, minlength=self.n_cols)

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        out[self._row_ids, self.col_indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.n_rows == other.n_rows and self.n_cols == other.n_cols
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def row_dot(row, dense):
    """Dot product of a sparse row with a dense vector."""
    dense = np.asarray(dense)
    if len(row.col_indices) == 0:
        return 0.0
    if row.col_indices.max() >= len(dense):
        raise StructureError("row index exceeds dense vector length")
    return float(np.dot(row.values, dense[row.col_indices]))


def column_sums(M, entry_values):
    """Column sums of an entry-aligned value array.

    Accumulates each column in ascending row order (the transpose-schedule
    order), so the result is deterministic and matches the parallel kernels
    bit for bit.
    """
    entry_values = np.asarray(entry_values, dtype=np.float64)
    if entry_values.shape != (M.nnz,):
        raise StructureError("entry value array does not match nnz")
    return np.bincount(M.col_indices, weights=entry_values, minlength=M.n_cols)


def op_norm_estimate(M, iters=50):
    """Largest singular value of M, by power iteration on M.T @ M.

    Starts from the all-ones direction (a good start for nonnegative
    matrices) and runs a fixed number of iterations; the zero matrix
    returns 0.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if M.nnz == 0 or M.n_cols == 0 or M.n_rows == 0:
        return 0.0
    v = np.full(M.n_cols, 1.0 / np.sqrt(M.n_cols))
    sigma_sq = 0.0
    for _ in range(iters):
        u = M.apply(v)
        w = M.apply_transpose(u)
        sigma_sq = np.linalg.norm(w)
        if sigma_sq == 0.0:
            return 0.0
        v = w / sigma_sq
    return float(np.sqrt(sigma_sq))
