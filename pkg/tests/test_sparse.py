import numpy as np
import pytest

from market_eq import SparseMatrix, StructureError, column_sums, op_norm_estimate, row_dot
from market_eq.sparse import RowView


def test_row_dot_scalar():
    row = RowView(np.array([0]), np.array([1.0]))
    assert row_dot(row, np.array([2.0])) == 2.0


def test_row_dot_empty_row():
    row = RowView(np.array([], dtype=np.int64), np.array([]))
    assert row_dot(row, np.array([5.0, 1.0])) == 0.0


def test_row_dot_two_entries():
    row = RowView(np.array([0, 2]), np.array([0.5, 2.0]))
    assert row_dot(row, np.array([1.0, 9.0, 3.0])) == 6.5


def test_row_dot_out_of_bounds():
    row = RowView(np.array([0, 5]), np.array([1.0, 1.0]))
    with pytest.raises(StructureError):
        row_dot(row, np.array([1.0, 2.0]))


def test_column_sums_two_by_one():
    m = SparseMatrix.from_dense([[1.0], [1.0]])
    out = column_sums(m, np.array([0.4, 0.6]))
    assert out.tolist() == [1.0]


def test_column_sums_zero_entries():
    m = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
    assert column_sums(m, np.zeros(4)).tolist() == [0.0, 0.0]


def test_column_sums_matches_dense_oracle():
    rng = np.random.default_rng(7)
    dense = rng.random((5, 3)) * (rng.random((5, 3)) < 0.6)
    m = SparseMatrix.from_dense(dense)
    entry_values = rng.random(m.nnz)
    # dense oracle: scatter values into a dense array, sum columns
    scat = np.zeros((5, 3))
    scat[m.row_ids, m.col_indices] = entry_values
    np.testing.assert_allclose(column_sums(m, entry_values), scat.sum(axis=0),
                               rtol=1e-14)


def test_column_sums_length_mismatch():
    m = SparseMatrix.from_dense([[1.0, 2.0]])
    with pytest.raises(StructureError):
        column_sums(m, np.ones(3))


def test_column_sums_ones_gives_column_counts():
    rng = np.random.default_rng(42)
    for _ in range(10):
        dense = (rng.random((10, 10)) < 0.4) * rng.random((10, 10))
        if not dense.any():
            continue
        m = SparseMatrix.from_dense(dense)
        counts = column_sums(m, np.ones(m.nnz))
        np.testing.assert_array_equal(counts, (dense != 0).sum(axis=0))


def test_op_norm_identity():
    m = SparseMatrix.from_dense(np.eye(3))
    assert op_norm_estimate(m) == pytest.approx(1.0, rel=1e-12)


def test_op_norm_ones_column():
    n = 7
    m = SparseMatrix.from_dense(np.ones((n, 1)))
    assert op_norm_estimate(m) == pytest.approx(np.sqrt(n), rel=1e-12)


def test_op_norm_matches_svd_oracle():
    rng = np.random.default_rng(3)
    dense = rng.random((6, 4))
    m = SparseMatrix.from_dense(dense)
    sigma_max = np.linalg.svd(dense, compute_uv=False)[0]
    assert op_norm_estimate(m) == pytest.approx(sigma_max, rel=0.05)


def test_op_norm_zero_matrix():
    m = SparseMatrix.from_triplets(3, 3, [], [], [])
    assert op_norm_estimate(m) == 0.0


def test_op_norm_unchanged_by_zero_row():
    rng = np.random.default_rng(9)
    dense = rng.random((4, 3))
    padded = np.vstack([dense, np.zeros((1, 3))])
    a = op_norm_estimate(SparseMatrix.from_dense(dense))
    b = op_norm_estimate(SparseMatrix.from_dense(padded))
    assert a == b


def test_deterministic_bit_identical():
    rng = np.random.default_rng(0)
    dense = rng.random((8, 5)) * (rng.random((8, 5)) < 0.5)
    m1 = SparseMatrix.from_dense(dense)
    m2 = SparseMatrix.from_dense(dense)
    v = rng.random(m1.nnz)
    assert np.array_equal(column_sums(m1, v), column_sums(m2, v))
    assert op_norm_estimate(m1) == op_norm_estimate(m2)


def test_structure_validation():
    with pytest.raises(StructureError):
        SparseMatrix(2, 2, np.array([0, 1, 1]), np.array([0, 0]), np.array([1.0, 1.0]))
    with pytest.raises(StructureError):
        SparseMatrix(1, 2, np.array([0, 2]), np.array([1, 0]), np.array([1.0, 1.0]))
    with pytest.raises(StructureError):
        SparseMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([-1.0]))
    with pytest.raises(StructureError):
        SparseMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([0.0]))


def test_from_triplets_drops_zeros_rejects_duplicates():
    m = SparseMatrix.from_triplets(2, 2, [0, 0, 1], [0, 1, 1], [1.0, 0.0, 2.0])
    assert m.nnz == 2
    with pytest.raises(StructureError):
        SparseMatrix.from_triplets(2, 2, [0, 0], [1, 1], [1.0, 2.0])


def test_transpose_schedule_column_grouped():
    m = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 0.0], [0.0, 4.0]])
    tperm, tindptr = m.transpose_schedule()
    cols = m.col_indices[tperm]
    assert np.all(np.diff(cols) >= 0)
    assert tindptr.tolist() == [0, 2, 4]
