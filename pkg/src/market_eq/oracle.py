"""Independent ground-truth equilibria for tiny and structured markets.

`analytic_equilibrium` writes down closed-form equilibria for three
structured market families. `brute_force_fisher` solves tiny instances by
projected gradient ascent with per-good simplex projection and diminishing
steps, recovering prices from active-constraint stationarity. Neither
shares any update code with the production solvers; they exist to check
them.
"""

import numpy as np
from numba import njit

from .errors import OracleUnavailable, ValidationError
from .instance import FisherInstance, validate
from .kkt import residuals_lifted
from .sparse import SparseMatrix

BRUTE_FORCE_MAX_NNZ = 12


def analytic_equilibrium(kind, params):
    """Closed-form equilibrium for a structured market.

    Kinds:
      single-good     params {w: budgets, u: optional per-buyer utilities}
                      -> p = [sum w], x_i = w_i / sum w
      single-buyer    params {u: utilities over goods, w: scalar budget}
                      -> x_j = 1, p_j = w u_j / sum u
      uniform-utility params {n, m, c, w: budgets}
                      -> p_j = sum w / m, x_ij = w_i / sum w

    Returns (instance, x_star, p_star) with x_star entry-aligned to the
    instance's stored pattern.
    """
    if kind == "single-good":
        w = np.asarray(params["w"], dtype=np.float64)
        n = len(w)
        u_col = np.asarray(params.get("u", np.ones(n)), dtype=np.float64)
        utilities = SparseMatrix.from_triplets(
            n, 1, np.arange(n), np.zeros(n, dtype=np.int64), u_col)
        total = float(np.sum(w))
        return (FisherInstance(utilities, w),
                w / total, np.array([total]))
    if kind == "single-buyer":
        u = np.asarray(params["u"], dtype=np.float64)
        w = float(params["w"])
        m = len(u)
        utilities = SparseMatrix.from_triplets(
            1, m, np.zeros(m, dtype=np.int64), np.arange(m), u)
        x = np.ones(m)
        p = w * u / float(np.sum(u))
        return FisherInstance(utilities, np.array([w])), x, p
    if kind == "uniform-utility":
        n, m, c = params["n"], params["m"], float(params["c"])
        w = np.asarray(params["w"], dtype=np.float64)
        utilities = SparseMatrix.from_dense(np.full((n, m), c))
        total = float(np.sum(w))
        x = np.repeat(w / total, m)
        p = np.full(m, total / m)
        return FisherInstance(utilities, w), x, p
    raise ValueError(f"unsupported equilibrium kind {kind!r}")


@njit(cache=True)
def _pg_epoch(indptr, uval, tperm, tindptr, w, x, col_buf, alpha, iters):
    n = indptr.shape[0] - 1
    m = tindptr.shape[0] - 1
    for _ in range(iters):
        for i in range(n):
            s = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                s += uval[e] * x[e]
            # a transiently empty row gets a strong but finite pull back;
            # values must stay small enough for the projection threshold
            # arithmetic to resolve
            if s < 1e-9:
                s = 1e-9
            coef = alpha * w[i] / s
            for e in range(indptr[i], indptr[i + 1]):
                x[e] += coef * uval[e]
        for j in range(m):
            a, b = tindptr[j], tindptr[j + 1]
            cnt = b - a
            if cnt == 1:
                x[tperm[a]] = 1.0
                continue
            for k in range(cnt):
                col_buf[k] = x[tperm[a + k]]
            srt = np.sort(col_buf[:cnt])
            css = 0.0
            theta = 0.0
            for k in range(1, cnt + 1):
                v = srt[cnt - k]
                css += v
                if v + (1.0 - css) / k > 0.0:
                    theta = (css - 1.0) / k
            for k in range(cnt):
                v = x[tperm[a + k]] - theta
                x[tperm[a + k]] = v if v > 0.0 else 0.0


def recover_prices(inst, x):
    """Stationarity prices p_j = max_i u_ij w_i / (u_i . x_i) over column j.

    Returns (p, s, y); callers must check s > 0 before trusting p and y.
    """
    u = inst.utilities
    s = u.row_sums(u.values * x)
    with np.errstate(divide="ignore"):
        y = np.where(s > 0, inst.budgets / np.where(s > 0, s, 1.0), np.inf)
    uy = u.values * y[u.row_ids]
    p = np.full(u.n_cols, -np.inf)
    np.maximum.at(p, u.col_indices, uy)
    return p, s, y


def brute_force_fisher(inst, tol=1e-8, max_iters=2_000_000, epoch=500):
    """High-precision equilibrium of a tiny instance, by projected gradient.

    Maximizes the budget-weighted log utility over the product of per-good
    simplices; the step size only ever shrinks (halved whenever an epoch
    fails to improve the KKT error). Raises OracleUnavailable if the target
    accuracy is not reached within the iteration budget.
    """
    u = inst.utilities
    if u.nnz > BRUTE_FORCE_MAX_NNZ:
        raise ValueError(
            f"brute-force oracle is limited to {BRUTE_FORCE_MAX_NNZ} nonzeros")
    violations = validate(inst)
    if violations:
        raise ValidationError("; ".join(violations))
    tperm, tindptr = u.transpose_schedule()
    col_counts = u.column_counts()
    x = 1.0 / col_counts[u.col_indices].astype(np.float64)
    col_buf = np.empty(int(col_counts.max()))
    alpha = 1.0
    best = np.inf
    stalls = 0
    iters = 0
    while iters < max_iters:
        _pg_epoch(u.row_offsets, u.values, tperm, tindptr, inst.budgets,
                  x, col_buf, alpha, epoch)
        iters += epoch
        p, s, y = recover_prices(inst, x)
        if np.all(s > 0):
            kkt = residuals_lifted(inst, x, s, p, y).rel_kkt
        else:
            kkt = np.inf  # a buyer is transiently starved; keep iterating
        if kkt <= tol:
            return x, p
        if kkt >= best * 0.999:
            stalls += 1
            if stalls >= 2:
                alpha *= 0.5
                stalls = 0
                if alpha < 1e-14:
                    break
        else:
            stalls = 0
        best = min(best, kkt)
    raise OracleUnavailable(
        f"projected gradient reached {best:.3e}, not {tol:.1e}, "
        f"within {max_iters} iterations")
