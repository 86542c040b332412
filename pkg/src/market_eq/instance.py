"""Problem data for Fisher and exchange markets, plus synthetic generators.

A Fisher instance is a nonnegative utility matrix U (buyers x goods) and a
positive budget vector w. An exchange instance replaces fixed budgets with
an endowment matrix E whose columns each sum to one. Solvability requires
every buyer to value at least one good and every good to be valued by at
least one buyer; `validate` reports violations of these as data, and the
generators repair degenerate patterns so their output always validates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StructureError, ValidationError
from .sparse import SparseMatrix

ENDOWMENT_COLUMN_TOL = 1e-12


@dataclass
class FisherInstance:
    utilities: SparseMatrix
    budgets: np.ndarray

    def __post_init__(self):
        self.budgets = np.ascontiguousarray(self.budgets, dtype=np.float64)
        if self.budgets.shape != (self.utilities.n_rows,):
            raise StructureError("budget vector length does not match buyer count")
        self.budgets.setflags(write=False)

    @property
    def n_buyers(self):
        return self.utilities.n_rows

    @property
    def n_goods(self):
        return self.utilities.n_cols

    def __eq__(self, other):
        if not isinstance(other, FisherInstance):
            return NotImplemented
        return self.utilities == other.utilities and np.array_equal(self.budgets, other.budgets)


@dataclass
class ExchangeInstance:
    utilities: SparseMatrix
    endowments: SparseMatrix

    def __post_init__(self):
        u, e = self.utilities, self.endowments
        if (u.n_rows, u.n_cols) != (e.n_rows, e.n_cols):
            raise StructureError("utility and endowment shapes differ")

    @property
    def n_buyers(self):
        return self.utilities.n_rows

    @property
    def n_goods(self):
        return self.utilities.n_cols

    def __eq__(self, other):
        if not isinstance(other, ExchangeInstance):
            return NotImplemented
        return self.utilities == other.utilities and self.endowments == other.endowments


@dataclass
class GeneratorConfig:
    n: int
    m: int
    sparsity_u: float
    sparsity_e: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError("n and m must be >= 1")
        if not 0.0 < self.sparsity_u <= 1.0:
            raise ValidationError("sparsity_u must lie in (0, 1]")
        if not 0.0 < self.sparsity_e <= 1.0:
            raise ValidationError("sparsity_e must lie in (0, 1]")


def validate(inst):
    """List of invariant violations; empty means the instance is solvable.

    Checks that every buyer values some good, every good is valued by some
    buyer, budgets are strictly positive, and (for exchange instances) that
    endowment columns sum to one and every player owns something.
    """
    violations = []
    u = inst.utilities
    row_nnz = np.diff(u.row_offsets)
    for i in np.nonzero(row_nnz == 0)[0]:
        violations.append(f"buyer {i} values no good")
    col_nnz = u.column_counts()
    for j in np.nonzero(col_nnz == 0)[0]:
        violations.append(f"good {j} unvalued")
    if isinstance(inst, FisherInstance):
        for i in np.nonzero(inst.budgets <= 0)[0]:
            violations.append(f"nonpositive budget for buyer {i}")
    elif isinstance(inst, ExchangeInstance):
        e = inst.endowments
        csums = e.apply_transpose(np.ones(e.n_rows))
        for j in np.nonzero(np.abs(csums - 1.0) > ENDOWMENT_COLUMN_TOL)[0]:
            violations.append(f"endowment column {j} sums to {csums[j]!r}, not 1")
        e_row_nnz = np.diff(e.row_offsets)
        for i in np.nonzero(e_row_nnz == 0)[0]:
            violations.append(f"player {i} holds no endowment")
    else:
        raise TypeError(f"unsupported instance type {type(inst)!r}")
    return violations


def normalize(inst):
    """Scale every utility row so its largest entry is exactly 1.

    Per-buyer rescaling does not change any buyer's optimal bundle, so the
    equilibrium allocation and prices are unchanged. Returns the scaled
    instance and the per-row divisors (row i of the result equals row i of
    the input divided by ``scales[i]``), for de-normalizing buyer-level
    diagnostics: t and y of the original instance are ``t_norm * scales``
    and ``y_norm / scales``. Dividing by the row max (rather than
    multiplying by its reciprocal) keeps the operation exactly idempotent.
    """
    u = inst.utilities
    scales = np.zeros(u.n_rows)
    np.maximum.at(scales, u.row_ids, u.values)
    if np.any(scales == 0):
        raise ValidationError("cannot normalize: some buyer values no good")
    scaled = SparseMatrix(u.n_rows, u.n_cols, u.row_offsets, u.col_indices,
                          u.values / scales[u.row_ids])
    if isinstance(inst, FisherInstance):
        return FisherInstance(scaled, inst.budgets), scales
    return ExchangeInstance(scaled, inst.endowments), scales


def _sample_sparse(rng, n, m, q):
    """Bernoulli(q) pattern with Uniform(0,1) values, one row at a time."""
    rows, cols, vals = [], [], []
    for i in range(n):
        mask = rng.random(m) < q
        (hit,) = np.nonzero(mask)
        if len(hit):
            v = _positive_uniform(rng, len(hit))
            rows.append(np.full(len(hit), i, dtype=np.int64))
            cols.append(hit.astype(np.int64))
            vals.append(v)
    if rows:
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float64))


def _positive_uniform(rng, size):
    v = rng.random(size)
    while np.any(v == 0.0):
        zero = v == 0.0
        v[zero] = rng.random(int(zero.sum()))
    return v


def _repair_pattern(rng, n, m, rows, cols, vals):
    """Give every empty row and column one uniformly placed positive entry."""
    occupied = set(zip(rows.tolist(), cols.tolist()))
    row_has = np.zeros(n, dtype=bool)
    row_has[rows] = True
    add_r, add_c, add_v = [], [], []
    for i in np.nonzero(~row_has)[0]:
        j = int(rng.integers(0, m))
        while (int(i), j) in occupied:
            j = int(rng.integers(0, m))
        occupied.add((int(i), j))
        add_r.append(i)
        add_c.append(j)
        add_v.append(float(_positive_uniform(rng, 1)[0]))
    col_has = np.zeros(m, dtype=bool)
    col_has[cols] = True
    col_has[add_c] = True
    for j in np.nonzero(~col_has)[0]:
        i = int(rng.integers(0, n))
        while (i, int(j)) in occupied:
            i = int(rng.integers(0, n))
        occupied.add((i, int(j)))
        add_r.append(i)
        add_c.append(j)
        add_v.append(float(_positive_uniform(rng, 1)[0]))
    if add_r:
        rows = np.concatenate([rows, np.asarray(add_r, dtype=np.int64)])
        cols = np.concatenate([cols, np.asarray(add_c, dtype=np.int64)])
        vals = np.concatenate([vals, np.asarray(add_v, dtype=np.float64)])
    return rows, cols, vals


def _generate_utilities(rng, cfg):
    rows, cols, vals = _sample_sparse(rng, cfg.n, cfg.m, cfg.sparsity_u)
    rows, cols, vals = _repair_pattern(rng, cfg.n, cfg.m, rows, cols, vals)
    return SparseMatrix.from_triplets(cfg.n, cfg.m, rows, cols, vals)


def generate_fisher(cfg):
    """Random Fisher instance: Bernoulli(q) support, Uniform(0,1) data.

    Each utility entry is present with probability ``sparsity_u`` and drawn
    from Uniform(0,1); budgets are Uniform(0,1) resampled at exact zero.
    Empty rows/columns are repaired with a single placed entry so the
    output always validates.
    """
    rng = np.random.default_rng(cfg.seed)
    utilities = _generate_utilities(rng, cfg)
    budgets = _positive_uniform(rng, cfg.n)
    return FisherInstance(utilities, budgets)


def generate_exchange(cfg):
    """Random exchange instance; endowment columns are rescaled to sum to 1."""
    rng = np.random.default_rng(cfg.seed)
    utilities = _generate_utilities(rng, cfg)
    rows, cols, vals = _sample_sparse(rng, cfg.n, cfg.m, cfg.sparsity_e)
    rows, cols, vals = _repair_pattern(rng, cfg.n, cfg.m, rows, cols, vals)
    csum = np.bincount(cols, weights=vals, minlength=cfg.m)
    vals = vals / csum[cols]
    endowments = SparseMatrix.from_triplets(cfg.n, cfg.m, rows, cols, vals)
    return ExchangeInstance(utilities, endowments)
