import numpy as np
import pytest

from market_eq import (FisherInstance, GeneratorConfig, SparseMatrix, ValidationError,
                       generate_exchange, generate_fisher, normalize, validate)


def test_validate_ok():
    inst = FisherInstance(SparseMatrix.from_dense([[1.0]]), np.array([1.0]))
    assert validate(inst) == []


def test_validate_unvalued_good():
    # column 1 exists but holds no entries
    u = SparseMatrix.from_triplets(2, 2, [0, 1], [0, 0], [1.0, 2.0])
    inst = FisherInstance(u, np.array([1.0, 1.0]))
    assert any("good 1 unvalued" in v for v in validate(inst))


def test_validate_empty_buyer_row():
    u = SparseMatrix.from_triplets(2, 1, [0], [0], [1.0])
    inst = FisherInstance(u, np.array([1.0, 1.0]))
    assert any("buyer 1" in v for v in validate(inst))


def test_validate_nonpositive_budget():
    inst = FisherInstance(SparseMatrix.from_dense([[1.0], [1.0]]),
                          np.array([1.0, 0.0]))
    assert any("nonpositive budget" in v for v in validate(inst))


def test_normalize_divides_by_row_max():
    inst = FisherInstance(SparseMatrix.from_dense([[2.0, 4.0]]), np.array([1.0]))
    out, scales = normalize(inst)
    assert out.utilities.values.tolist() == [0.5, 1.0]
    assert scales.tolist() == [4.0]


def test_normalize_idempotent_and_pattern_preserving():
    inst = generate_fisher(GeneratorConfig(n=6, m=4, sparsity_u=0.7, seed=5))
    once, _ = normalize(inst)
    twice, scales2 = normalize(once)
    assert np.array_equal(once.utilities.values, twice.utilities.values)
    assert np.array_equal(once.utilities.col_indices, inst.utilities.col_indices)
    assert np.all(scales2 == 1.0)
    row_max = np.zeros(once.n_buyers)
    np.maximum.at(row_max, once.utilities.row_ids, once.utilities.values)
    assert np.all(row_max == 1.0)


def test_normalize_preserves_equilibrium(tiny_fisher):
    # solving either version must give the same allocation and prices
    from market_eq import SolveConfig, run_solve

    norm_inst, _ = normalize(tiny_fisher)
    cfg = SolveConfig(tol=1e-8, max_iters=100_000)
    rep_orig = run_solve(tiny_fisher, cfg, algo="pdhcg")
    rep_norm = run_solve(norm_inst, cfg, algo="pdhcg")
    np.testing.assert_allclose(rep_orig.prices, rep_norm.prices, atol=1e-6)
    np.testing.assert_allclose(rep_orig.allocation, rep_norm.allocation, atol=1e-5)


def test_denormalized_solution_has_zero_kkt_error(tiny_fisher):
    # a solution of the normalized instance certifies the original one
    from market_eq import SolveConfig, residuals_compact, run_solve

    norm_inst, _ = normalize(tiny_fisher)
    rep = run_solve(norm_inst, SolveConfig(tol=1e-9, max_iters=100_000), algo="pdhcg")
    res = residuals_compact(tiny_fisher, rep.allocation, rep.prices)
    assert res.rel_kkt < 1e-7


def test_generator_determinism():
    cfg = GeneratorConfig(n=30, m=12, sparsity_u=0.3, seed=99)
    a = generate_fisher(cfg)
    b = generate_fisher(cfg)
    assert a == b


def test_generator_dense_when_q_one():
    inst = generate_fisher(GeneratorConfig(n=5, m=4, sparsity_u=1.0, seed=0))
    assert inst.utilities.nnz == 20


def test_generator_nnz_within_binomial_bound():
    n, m, q = 1000, 400, 0.2
    inst = generate_fisher(GeneratorConfig(n=n, m=m, sparsity_u=q, seed=1))
    mean = q * n * m
    sigma = np.sqrt(n * m * q * (1 - q))
    # pattern repair may add a handful of entries on top of the binomial draw
    assert abs(inst.utilities.nnz - mean) < 3 * sigma + n + m


def test_generator_always_validates():
    rng = np.random.default_rng(0)
    for k in range(100):
        cfg = GeneratorConfig(n=int(rng.integers(1, 12)), m=int(rng.integers(1, 9)),
                              sparsity_u=float(rng.uniform(0.05, 1.0)), seed=k)
        assert validate(generate_fisher(cfg)) == []


def test_generator_budget_positive():
    inst = generate_fisher(GeneratorConfig(n=50, m=5, sparsity_u=0.4, seed=2))
    assert np.all(inst.budgets > 0)


def test_exchange_columns_sum_to_one():
    inst = generate_exchange(GeneratorConfig(n=40, m=15, sparsity_u=0.3,
                                             sparsity_e=0.5, seed=4))
    csums = inst.endowments.apply_transpose(np.ones(inst.n_buyers))
    np.testing.assert_allclose(csums, 1.0, atol=1e-12)
    assert validate(inst) == []


def test_exchange_generator_determinism_and_validation():
    cfg = GeneratorConfig(n=1000, m=400, sparsity_u=0.2, sparsity_e=0.5, seed=8)
    inst = generate_exchange(cfg)
    assert validate(inst) == []
    assert inst == generate_exchange(cfg)


def test_generator_config_validation():
    with pytest.raises(ValidationError):
        GeneratorConfig(n=0, m=3, sparsity_u=0.5)
    with pytest.raises(ValidationError):
        GeneratorConfig(n=3, m=3, sparsity_u=0.0)
    with pytest.raises(ValidationError):
        GeneratorConfig(n=3, m=3, sparsity_u=1.5)
