import numpy as np
import pytest

from market_eq import (FisherInstance, SparseMatrix, analytic_equilibrium,
                       residuals_compact, residuals_lifted, scaled_kkt_residual,
                       smoothed_gap)
from market_eq.kkt import scaled_kkt_residual_compact


def reference_residuals(inst, x, t, p, y):
    """Loop-based dense evaluation of the three relative residuals.

    Written independently of the package implementation (dense matrices,
    explicit loops) so the two can check each other.
    """
    U = inst.utilities.to_dense()
    n, m = U.shape
    X = np.zeros((n, m))
    X[inst.utilities.row_ids, inst.utilities.col_indices] = x
    w = inst.budgets

    col_sums = [sum(X[i][j] for i in range(n)) for j in range(m)]
    link = [abs(t[i] - sum(U[i][j] * X[i][j] for j in range(m))) for i in range(n)]
    num_p = max(max(abs(c - 1.0) for c in col_sums), max(link))
    den_p = 1.0 + max(max(abs(c) for c in col_sums), max(link), 1.0)
    r_primal = num_p / den_p

    wt = [w[i] / t[i] for i in range(n)]
    term1 = max(abs(wt[i] - y[i]) for i in range(n))
    stored = list(zip(inst.utilities.row_ids, inst.utilities.col_indices))
    col_max = {}
    for (i, j) in stored:
        col_max[j] = max(col_max.get(j, -np.inf), U[i][j] * y[i])
    slack = [p[j] - col_max[j] for j in sorted(col_max)]
    term2 = max(max(-s, 0.0) for s in slack)
    den_d = 1.0 + max(max(abs(v) for v in wt), max(abs(v) for v in y), max(slack))
    r_dual = max(term1, term2) / den_d

    pos = [(i, j, max(p[j] - U[i][j] * y[i], 0.0)) for (i, j) in stored]
    num_g = max(X[i][j] * s for (i, j, s) in pos)
    den_g = 1.0 + max(max(abs(v) for v in x), max(s for (_, _, s) in pos))
    r_gap = num_g / den_g
    return r_primal, r_dual, r_gap


def _random_state(inst, rng):
    u = inst.utilities
    x = rng.random(u.nnz)
    t = rng.random(inst.n_buyers) + 0.1
    p = rng.normal(1.0, 0.5, inst.n_goods)
    y = rng.normal(0.5, 0.5, inst.n_buyers)
    return x, t, p, y


def test_residuals_match_reference_on_random_states(small_random_fisher):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, t, p, y = _random_state(small_random_fisher, rng)
        res = residuals_lifted(small_random_fisher, x, t, p, y)
        rp, rd, rg = reference_residuals(small_random_fisher, x, t, p, y)
        assert res.r_primal == pytest.approx(rp, abs=1e-12)
        assert res.r_dual == pytest.approx(rd, abs=1e-12)
        assert res.r_gap == pytest.approx(rg, abs=1e-12)
        assert res.rel_kkt == max(res.r_primal, res.r_dual, res.r_gap)


def test_zero_at_analytic_equilibrium():
    inst, x, p = analytic_equilibrium("single-good", {"w": [0.3, 0.7]})
    t = inst.utilities.row_sums(inst.utilities.values * x)
    res = residuals_lifted(inst, x, t, p, inst.budgets / t)
    assert res.rel_kkt < 1e-12


def test_gap_grows_linearly_in_price_perturbation():
    inst, x, p = analytic_equilibrium("uniform-utility",
                                      {"n": 2, "m": 2, "c": 0.5, "w": [1.0, 1.0]})
    t = inst.utilities.row_sums(inst.utilities.values * x)
    y = inst.budgets / t
    gaps = []
    for delta in (1e-3, 2e-3):
        p2 = p.copy()
        p2[0] += delta
        res = residuals_lifted(inst, x, t, p2, y)
        # numerator is max_ij x_ij (p_j - u_ij y_i)_+ = x_00 * delta here
        gaps.append(res.r_gap * (1.0 + max(np.max(x), delta)))
    assert gaps[0] == pytest.approx(x[0] * 1e-3, rel=1e-9)
    assert gaps[1] == pytest.approx(2.0 * gaps[0], rel=1e-6)


def test_primal_residual_for_doubled_column():
    # one buyer, one good, allocation 2 instead of 1, everything else clean
    inst = FisherInstance(SparseMatrix.from_dense([[1.0]]), np.array([1.0]))
    x = np.array([2.0])
    t = np.array([2.0])
    y = np.array([0.5])
    p = np.array([0.5])
    res = residuals_lifted(inst, x, t, p, y)
    assert res.r_primal == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_residuals_require_positive_t(tiny_fisher):
    with pytest.raises(ValueError):
        residuals_lifted(tiny_fisher, np.ones(6), np.array([1.0, 0.0, 1.0]),
                         np.ones(2), np.ones(3))


def test_compact_residuals_delegate(tiny_fisher):
    rng = np.random.default_rng(2)
    x = rng.random(6) + 0.01
    p = rng.random(2)
    u = tiny_fisher.utilities
    t = u.row_sums(u.values * x)
    res_a = residuals_compact(tiny_fisher, x, p)
    res_b = residuals_lifted(tiny_fisher, x, t, p, tiny_fisher.budgets / t)
    assert res_a == res_b


def test_compact_residuals_zero_utility_fault(tiny_fisher):
    x = np.zeros(6)
    with pytest.raises(ValueError, match="zero utility"):
        residuals_compact(tiny_fisher, x, np.ones(2))


def test_residuals_permutation_invariant(small_random_fisher):
    rng = np.random.default_rng(4)
    inst = small_random_fisher
    x, t, p, y = _random_state(inst, rng)
    res = residuals_lifted(inst, x, t, p, y)

    perm_r = rng.permutation(inst.n_buyers)
    perm_c = rng.permutation(inst.n_goods)
    u = inst.utilities
    inv_r, inv_c = np.argsort(perm_r), np.argsort(perm_c)
    permuted = SparseMatrix.from_triplets(
        inst.n_buyers, inst.n_goods, inv_r[u.row_ids], inv_c[u.col_indices], u.values)
    # entry k of the original moved to position lookup[k] in the permuted CSR
    order = np.lexsort((inv_c[u.col_indices], inv_r[u.row_ids]))
    inst2 = FisherInstance(permuted, inst.budgets[perm_r])
    res2 = residuals_lifted(inst2, x[order], t[perm_r], p[perm_c], y[perm_r])
    assert res2.r_primal == pytest.approx(res.r_primal, rel=1e-12, abs=1e-15)
    assert res2.r_dual == pytest.approx(res.r_dual, rel=1e-12, abs=1e-15)
    assert res2.r_gap == pytest.approx(res.r_gap, rel=1e-12, abs=1e-15)


def test_scaled_residual_zero_at_equilibrium():
    inst, x, p = analytic_equilibrium("single-buyer", {"u": [1.0, 1.0], "w": 1.0})
    t = inst.utilities.row_sums(inst.utilities.values * x)
    y = inst.budgets / t
    assert scaled_kkt_residual(inst, x, t, p, y, xi=1.0) < 1e-12


def test_scaled_residual_compact_equals_lifted_with_derived_state(tiny_fisher):
    rng = np.random.default_rng(8)
    x = rng.random(6) + 0.05
    p = rng.random(2)
    u = tiny_fisher.utilities
    t = u.row_sums(u.values * x)
    y = tiny_fisher.budgets / t
    a = scaled_kkt_residual_compact(tiny_fisher, x, p, xi=2.0)
    b = scaled_kkt_residual(tiny_fisher, x, t, p, y, xi=2.0)
    assert a == b


def test_scaled_residual_xi_affects_only_projection_component(tiny_fisher):
    rng = np.random.default_rng(9)
    x = rng.random(6) + 0.05
    t = rng.random(3) + 0.5
    p = rng.random(2)
    y = rng.random(3)
    u = tiny_fisher.utilities
    v1 = scaled_kkt_residual(tiny_fisher, x, t, p, y, xi=1.0)
    v2 = scaled_kkt_residual(tiny_fisher, x, t, p, y, xi=2.0)
    # reconstruct both stacks without the projection component; those parts
    # must agree exactly
    slack = p[u.col_indices] - u.values * y[u.row_ids]
    for xi, total in ((1.0, v1), (2.0, v2)):
        comp = x - np.maximum(x - slack / xi, 0.0)
        rest_sq = total**2 - float(np.dot(comp, comp))
        if xi == 1.0:
            base = rest_sq
    assert rest_sq == pytest.approx(base, rel=1e-9)


def test_scaled_residual_zero_iff_kkt(tiny_fisher):
    # crafted non-optimal state must give a strictly positive residual
    rng = np.random.default_rng(10)
    x = rng.random(6) + 0.1
    u = tiny_fisher.utilities
    t = u.row_sums(u.values * x)
    y = tiny_fisher.budgets / t
    p = np.array([2.0, 2.0])
    assert scaled_kkt_residual(tiny_fisher, x, t, p, y) > 1e-3


class TestSmoothedGap:
    def _saddle(self):
        return analytic_equilibrium("uniform-utility",
                                    {"n": 2, "m": 2, "c": 0.5, "w": [1.0, 1.0]})

    def test_zero_at_saddle_center(self):
        inst, x, p = self._saddle()
        g = smoothed_gap(inst, (x, p), (x, p), xi=1.0)
        assert abs(g) < 1e-8

    def test_nonnegative_centered_at_saddle(self):
        inst, x, p = self._saddle()
        rng = np.random.default_rng(11)
        for _ in range(25):
            z = (rng.random(4) + 0.05, p + rng.normal(0, 0.4, 2))
            assert smoothed_gap(inst, z, (x, p), xi=1.0) >= -1e-9

    def test_matches_grid_oracle(self, tiny_fisher):
        from market_eq import brute_force_fisher
        from market_eq.theory import smoothed_gap_grid_oracle

        x_star, p_star = brute_force_fisher(tiny_fisher, tol=1e-9)
        z = (np.maximum(x_star + 0.07, 0.02), p_star + 0.15)
        exact = smoothed_gap(tiny_fisher, z, (x_star, p_star), xi=1.0)
        grid = smoothed_gap_grid_oracle(tiny_fisher, z, (x_star, p_star), xi=1.0)
        assert exact == pytest.approx(grid, abs=1e-4)
