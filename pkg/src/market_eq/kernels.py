"""Hot-loop kernels, JIT-compiled with numba.

All parallel loops are structured so that every output element is produced
by exactly one thread and every reduction runs in a fixed serial order
(per-column ascending row index, per-row ascending column index). Results
are therefore bit-identical for any thread count.

Array layout: CSR arrays of the utility matrix (indptr, colind, uval), the
transpose schedule (tperm, tindptr) from SparseMatrix.transpose_schedule,
and entry-aligned iterate arrays x, x_prev, xbar of length nnz.
"""

import numpy as np
from numba import njit, prange

MAX_ROW_PASSES = 200

# width below which a bracket cannot be subdivided in double precision
_REL_WIDTH_FLOOR = 4e-16


@njit(cache=True, inline="always")
def _g_eval(a, b, uval, c_buf, tw, s):
    """u . max(0, c + tw*u/s) over one row's entries."""
    acc = 0.0
    for t in range(a, b):
        xv = c_buf[t] + tw * uval[t] / s
        if xv > 0.0:
            acc += uval[t] * xv
    return acc


@njit(cache=True)
def _row_root(a, b, uval, c_buf, tw, s0, sections, tol):
    """Root of phi(s) = s - g(s) by bracketing k-section search.

    For any trial s > 0 the pair (s, g(s)) brackets the root, because g is
    nonincreasing and crosses the diagonal exactly once. Each pass evaluates
    the sections-1 interior grid points of [L, U]; every evaluation yields a
    candidate upper bound max(s_l, g(s_l)) and lower bound min(s_l, g(s_l)).
    Returns (root, passes); passes = -1 signals a failed search.
    """
    if s0 > 0.0:
        s_t = s0
    else:
        # iterate left the row at zero utility; probe at the scale that
        # balances s against the budget term
        usq = 0.0
        for t in range(a, b):
            usq += uval[t] * uval[t]
        s_t = np.sqrt(tw * usq)
        if s_t <= 0.0:
            s_t = 1e-12 * (1.0 + tw)
    st = _g_eval(a, b, uval, c_buf, tw, s_t)
    if st == s_t:
        return s_t, 0
    if st > s_t:
        L, U = s_t, st
    else:
        L, U = st, s_t
    passes = 0
    while True:
        width_floor = _REL_WIDTH_FLOOR * (U if U > 1.0 else 1.0)
        eff_tol = tol if tol > width_floor else width_floor
        if U - L <= eff_tol:
            return 0.5 * (L + U), passes
        passes += 1
        if passes > MAX_ROW_PASSES:
            return 0.5 * (L + U), -1
        newU = U
        newL = L
        exact = -1.0
        for l in range(1, sections):
            sl = ((sections - l) * L + l * U) / sections
            if sl <= L or sl >= U:
                continue
            stl = _g_eval(a, b, uval, c_buf, tw, sl)
            if stl == sl:
                exact = sl
                break
            if sl > stl:
                hi, lo = sl, stl
            else:
                hi, lo = stl, sl
            if hi < newU:
                newU = hi
            if lo > newL:
                newL = lo
        if exact >= 0.0:
            return exact, passes
        if newU == U and newL == L:
            # grid could not be placed strictly inside; bracket is at
            # floating-point resolution
            return 0.5 * (L + U), passes
        U = newU
        L = newL


@njit(cache=True, parallel=True)
def pdhcg_chunk(indptr, colind, uval, tperm, tindptr, w,
                x, x_prev, p, xbar, pbar, navg,
                tau, sigma, sections, subtol, iters,
                c_buf, pass_out):
    """Run `iters` compact-form iterations in place. Returns (navg, faults)."""
    n = indptr.shape[0] - 1
    m = tindptr.shape[0] - 1
    nnz = x.shape[0]
    count = navg
    faults = 0
    for it in range(iters):
        for j in prange(m):
            acc = 0.0
            for t in range(tindptr[j], tindptr[j + 1]):
                k = tperm[t]
                acc += 2.0 * x[k] - x_prev[k]
            p[j] += sigma * (acc - 1.0)
        for k in prange(nnz):
            x_prev[k] = x[k]
        pass_sum = 0
        for i in prange(n):
            a, b = indptr[i], indptr[i + 1]
            if b == a:
                continue
            tw = tau * w[i]
            s0 = 0.0
            for t in range(a, b):
                c_buf[t] = x_prev[t] - tau * p[colind[t]]
                s0 += uval[t] * x_prev[t]
            s_fin, npass = _row_root(a, b, uval, c_buf, tw, s0, sections, subtol)
            if npass < 0:
                faults += 1
            else:
                pass_sum += npass
            for t in range(a, b):
                xv = c_buf[t] + tw * uval[t] / s_fin
                x[t] = xv if xv > 0.0 else 0.0
        pass_out[it] = pass_sum
        count += 1
        wold = (count - 1.0) / count
        wnew = 1.0 / count
        for k in prange(nnz):
            xbar[k] = wold * xbar[k] + wnew * x[k]
        for j in prange(m):
            pbar[j] = wold * pbar[j] + wnew * p[j]
    return count, faults


@njit(cache=True, parallel=True)
def pdhg_chunk(indptr, colind, uval, tperm, tindptr, w,
               x, x_prev, t, t_prev, p, y,
               xbar, tbar, pbar, ybar, navg,
               tau, sigma, iters):
    """Run `iters` lifted-form iterations in place. Returns navg."""
    n = indptr.shape[0] - 1
    m = tindptr.shape[0] - 1
    nnz = x.shape[0]
    count = navg
    for it in range(iters):
        for j in prange(m):
            acc = 0.0
            for tt in range(tindptr[j], tindptr[j + 1]):
                k = tperm[tt]
                acc += 2.0 * x[k] - x_prev[k]
            p[j] += sigma * (acc - 1.0)
        for i in prange(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += uval[k] * (2.0 * x[k] - x_prev[k])
            y[i] += sigma * ((2.0 * t[i] - t_prev[i]) - acc)
        for k in prange(nnz):
            x_prev[k] = x[k]
        for i in prange(n):
            t_prev[i] = t[i]
        for i in prange(n):
            d = tau * y[i] - t_prev[i]
            root = np.sqrt(d * d + 4.0 * tau * w[i])
            # conjugate form for d > 0 avoids cancellation that could
            # round t to zero
            if d > 0.0:
                t[i] = 2.0 * tau * w[i] / (d + root)
            else:
                t[i] = 0.5 * (root - d)
        for i in prange(n):
            for k in range(indptr[i], indptr[i + 1]):
                xv = x_prev[k] - tau * (p[colind[k]] - uval[k] * y[i])
                x[k] = xv if xv > 0.0 else 0.0
        count += 1
        wold = (count - 1.0) / count
        wnew = 1.0 / count
        for k in prange(nnz):
            xbar[k] = wold * xbar[k] + wnew * x[k]
        for i in prange(n):
            tbar[i] = wold * tbar[i] + wnew * t[i]
            ybar[i] = wold * ybar[i] + wnew * y[i]
        for j in prange(m):
            pbar[j] = wold * pbar[j] + wnew * p[j]
    return count
