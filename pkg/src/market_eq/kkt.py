"""Termination criteria and optimality diagnostics.

Relative primal/dual residuals and the complementarity gap are the solver's
stopping metric; the scaled KKT residual and the smoothed duality gap are
theory-side diagnostics and never drive termination. All per-entry maxima
range over the stored pattern of the utility matrix (allocations are
identically zero off the pattern).
"""

from dataclasses import dataclass

import numpy as np

from .sparse import column_sums


@dataclass
class Residuals:
    r_primal: float
    r_dual: float
    r_gap: float
    rel_kkt: float

    def as_dict(self):
        return {"r_primal": self.r_primal, "r_dual": self.r_dual,
                "r_gap": self.r_gap, "rel_kkt": self.rel_kkt}


def residuals_lifted(inst, x, t, p, y):
    """Relative primal residual, dual residual, and gap for a lifted state.

    r_primal = max(||colsum(x) - 1||_inf, max_i |t_i - u_i.x_i|)
               / (1 + max(||colsum(x)||_inf, max_i |t_i - u_i.x_i|, 1))
    r_dual   = max(||w/t - y||_inf, max_j (p_j - max_i u_ij y_i)_-)
               / (1 + max(||w/t||_inf, ||y||_inf, max_j (p_j - max_i u_ij y_i)))
    r_gap    = max_ij x_ij (p_j - u_ij y_i)_+
               / (1 + max(||x||_inf, max_ij (p_j - u_ij y_i)_+))

    with the i-maxima in r_dual taken over each column's stored entries.
    """
    u = inst.utilities
    w = inst.budgets
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("residuals require strictly positive t")

    colsum_x = column_sums(u, x)
    ux = u.row_sums(u.values * x)
    row_gap = np.max(np.abs(t - ux)) if len(t) else 0.0
    col_gap = np.max(np.abs(colsum_x - 1.0)) if len(colsum_x) else 0.0
    denom_p = 1.0 + max(np.max(np.abs(colsum_x), initial=0.0), row_gap, 1.0)
    r_primal = max(col_gap, row_gap) / denom_p

    wt = w / t
    dual_t = np.max(np.abs(wt - y), initial=0.0)
    uy = u.values * y[u.row_ids]
    col_best = np.full(u.n_cols, -np.inf)
    np.maximum.at(col_best, u.col_indices, uy)
    price_slack = p - col_best
    dual_p = np.max(np.maximum(-price_slack, 0.0), initial=0.0)
    denom_d = 1.0 + max(np.max(np.abs(wt), initial=0.0),
                        np.max(np.abs(y), initial=0.0),
                        np.max(price_slack, initial=0.0))
    r_dual = max(dual_t, dual_p) / denom_d

    entry_slack = np.maximum(p[u.col_indices] - uy, 0.0)
    gap_num = np.max(x * entry_slack, initial=0.0)
    denom_g = 1.0 + max(np.max(np.abs(x), initial=0.0),
                        np.max(entry_slack, initial=0.0))
    r_gap = gap_num / denom_g

    rel = max(r_primal, r_dual, r_gap)
    return Residuals(float(r_primal), float(r_dual), float(r_gap), float(rel))


def residuals_compact(inst, x, p):
    """Residuals for a compact state, with t = u_i.x_i and y = w/t."""
    u = inst.utilities
    ux = u.row_sums(u.values * np.asarray(x, dtype=np.float64))
    if np.any(ux <= 0):
        i = int(np.nonzero(ux <= 0)[0][0])
        raise ValueError(f"buyer {i} has zero utility value; state is not a "
                         "valid compact iterate")
    return residuals_lifted(inst, x, ux, p, inst.budgets / ux)


def scaled_kkt_residual(inst, x, t, p, y, xi=1.0):
    """Euclidean norm of the stacked scaled KKT residual.

    Components: budget complementarity t_i y_i - w_i; the projected
    stationarity gap x_ij - [x_ij - (1/xi)(p_j - u_ij y_i)]_+; the dual
    feasibility violation [p_j - u_ij y_i]_- per stored pair; column-sum
    feasibility; and the utility-link residual t_i - u_i.x_i.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    u = inst.utilities
    w = inst.budgets
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    slack = p[u.col_indices] - u.values * y[u.row_ids]
    comp = x - np.maximum(x - slack / xi, 0.0)
    dual_viol = np.minimum(slack, 0.0)
    parts = [t * y - w,
             comp,
             dual_viol,
             column_sums(u, x) - 1.0,
             t - u.row_sums(u.values * x)]
    return float(np.sqrt(sum(float(np.dot(v, v)) for v in parts)))


def scaled_kkt_residual_compact(inst, x, p, xi=1.0):
    """Scaled KKT residual of a compact state via the derived (t, y)."""
    u = inst.utilities
    ux = u.row_sums(u.values * np.asarray(x, dtype=np.float64))
    if np.any(ux <= 0):
        raise ValueError("compact state has a zero-utility buyer")
    return scaled_kkt_residual(inst, x, ux, p, inst.budgets / ux, xi)


def eg_objective(inst, x):
    """Negated Eisenberg-Gale objective: sum_i -w_i log(u_i . x_i)."""
    ux = inst.utilities.row_sums(inst.utilities.values * np.asarray(x, dtype=np.float64))
    if np.any(ux <= 0):
        return np.inf
    return float(-np.dot(inst.budgets, np.log(ux)))


def smoothed_gap(inst, z, center, xi=1.0, sections=32, subtol=1e-12):
    """Smoothed duality gap of z = (x, p) centered at (x_c, p_c).

    The maximization over candidate prices is an exact quadratic; the
    minimization over candidate allocations is row-separable and solved by
    the same exact row subproblem as the compact solver with step 1/xi.
    """
    from .pdhcg import solve_row_subproblem

    if xi <= 0:
        raise ValueError("xi must be positive")
    u = inst.utilities
    w = inst.budgets
    x, p = (np.asarray(a, dtype=np.float64) for a in z)
    x_c, p_c = (np.asarray(a, dtype=np.float64) for a in center)

    f_x = eg_objective(inst, x)
    if not np.isfinite(f_x):
        return np.inf
    r = column_sums(u, x) - 1.0
    best_price_part = f_x + float(np.dot(p_c, r)) + float(np.dot(r, r)) / (2.0 * xi)

    inv_xi = 1.0 / xi
    min_alloc_part = 0.0
    for i in range(u.n_rows):
        a, b = u.row_offsets[i], u.row_offsets[i + 1]
        row = u.row(i)
        x_hat = solve_row_subproblem(x_c[a:b], p[row.col_indices], inv_xi, w[i],
                                     row, sections=sections, tol=subtol)
        s_hat = float(np.dot(row.values, x_hat))
        diff = x_hat - x_c[a:b]
        min_alloc_part += (-w[i] * np.log(s_hat)
                           + float(np.dot(p[row.col_indices], x_hat))
                           + 0.5 * xi * float(np.dot(diff, diff)))
    return best_price_part + float(np.sum(p)) - min_alloc_part
