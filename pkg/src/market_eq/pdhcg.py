"""Restarted PDHCG on the compact formulation.

Prices update exactly as in the lifted method; the allocation update solves
each buyer's proximal subproblem

    min_{x_i >= 0}  -w_i log(u_i . x_i) + p . x_i + ||x_i - x_i^k||^2 / (2 tau)

exactly. Writing s = u_i . x_i, the optimality system collapses to the
scalar equation phi(s) = s - g(s) = 0 with

    g(s) = sum_j u_ij * max(0, x_ij^k - tau p_j + tau w_i u_ij / s),

where g is nonincreasing, so phi is strictly increasing and has a unique
positive root. For any trial s > 0 the pair (s, g(s)) brackets the root; a
k-section search shrinks the bracket by evaluating k-1 interior grid points
per pass and folding every candidate bound into the bracket.

These are the plain-numpy reference routines; `solve_fisher_pdhcg` runs the
fused kernels in `driver`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SubproblemError
from .sparse import column_sums

MAX_PASSES = 200


@dataclass
class CompactState:
    x: np.ndarray
    p: np.ndarray
    prev_x: np.ndarray = field(default=None)
    avg_x: np.ndarray = field(default=None)
    avg_p: np.ndarray = field(default=None)
    inner_count: int = 0

    def __post_init__(self):
        if self.prev_x is None:
            self.prev_x = self.x.copy()
        if self.avg_x is None:
            self.avg_x = self.x.copy()
        if self.avg_p is None:
            self.avg_p = self.p.copy()


@dataclass
class Bracket:
    """Interval known to contain the subproblem root."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 < self.lower <= self.upper:
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")

    @property
    def width(self):
        return self.upper - self.lower


def initial_compact_state(inst):
    """Column-uniform feasible x and budget-scaled uniform prices."""
    u = inst.utilities
    col_counts = u.column_counts()
    x = 1.0 / col_counts[u.col_indices].astype(np.float64)
    p = np.full(u.n_cols, float(np.sum(inst.budgets)) / u.n_cols)
    return CompactState(x=x, p=p)


def row_candidate(x_row_k, p_row, tau, w_i, u_row, s):
    """Candidate row allocation at trial utility value s, and its u-weighted sum.

    p_row holds the prices of this row's stored columns, aligned with
    ``u_row``. Returns (x_row, s_tilde) with s_tilde = u_row . x_row.
    """
    if s <= 0:
        raise ValueError("trial value must be positive")
    x_row = np.maximum(x_row_k - tau * p_row + tau * w_i * u_row.values / s, 0.0)
    return x_row, float(np.dot(u_row.values, x_row))


def _initial_bracket(x_row_k, p_row, tau, w_i, u_row):
    """A positive bracket for the root, from the iterate's trial value.

    When the iterate's utility value is zero, probe instead at the scale
    sqrt(tau * w_i * ||u||^2) that balances s against the budget term. A
    zero lower endpoint (fully clamped candidate) is expanded down to a
    positive value, which always exists since g blows up as s -> 0+.
    """
    s0 = float(np.dot(u_row.values, x_row_k))
    if s0 <= 0.0:
        s0 = float(np.sqrt(tau * w_i * np.dot(u_row.values, u_row.values)))
        if s0 <= 0.0:
            s0 = 1e-12 * (1.0 + tau * w_i)
    _, s_tilde = row_candidate(x_row_k, p_row, tau, w_i, u_row, s0)
    lo, hi = min(s0, s_tilde), max(s0, s_tilde)
    if lo <= 0.0:
        lo = min(hi, 1.0) * 1e-6
        for _ in range(120):
            _, st = row_candidate(x_row_k, p_row, tau, w_i, u_row, lo)
            if st >= lo:
                break
            lo *= 1e-3
        else:
            raise SubproblemError("could not find a positive lower bound")
    return Bracket(lo, hi), s_tilde == s0


def solve_row_subproblem(x_row_k, p_row, tau, w_i, u_row, sections=32, tol=1e-10,
                         trace=None):
    """Exact proximal row solve by k-section bracketing search.

    Returns the new row allocation. ``sections=2`` is classical bisection.
    If ``trace`` is a list, the bracket after every pass is appended to it.
    """
    if sections < 2:
        raise ValueError("sections must be >= 2")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x_row_k = np.asarray(x_row_k, dtype=np.float64)
    p_row = np.asarray(p_row, dtype=np.float64)
    bracket, exact = _initial_bracket(x_row_k, p_row, tau, w_i, u_row)
    if exact:
        x_row, _ = row_candidate(x_row_k, p_row, tau, w_i, u_row, bracket.upper)
        return x_row
    lo, hi = bracket.lower, bracket.upper
    for _ in range(MAX_PASSES):
        eff_tol = max(tol, 4e-16 * max(hi, 1.0))
        if hi - lo <= eff_tol:
            break
        new_lo, new_hi = lo, hi
        hit = None
        for l in range(1, sections):
            sl = ((sections - l) * lo + l * hi) / sections
            if not lo < sl < hi:
                continue
            _, stl = row_candidate(x_row_k, p_row, tau, w_i, u_row, sl)
            if stl == sl:
                hit = sl
                break
            new_hi = min(new_hi, max(sl, stl))
            new_lo = max(new_lo, min(sl, stl))
        if hit is not None:
            x_row, _ = row_candidate(x_row_k, p_row, tau, w_i, u_row, hit)
            return x_row
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
        if trace is not None:
            trace.append(Bracket(max(lo, np.finfo(float).tiny), hi))
    else:
        raise SubproblemError(
            f"row subproblem did not converge in {MAX_PASSES} passes "
            f"(bracket [{lo}, {hi}])")
    x_row, _ = row_candidate(x_row_k, p_row, tau, w_i, u_row, 0.5 * (lo + hi))
    return x_row


def dual_step_compact(state, sigma, inst):
    """Price ascent with primal extrapolation, in place."""
    ext_x = 2.0 * state.x - state.prev_x
    state.p += sigma * (column_sums(inst.utilities, ext_x) - 1.0)
    return state.p


def inner_loop_compact(state, steps, K, inst, sections=32, subtol=1e-10):
    """Run K averaged compact iterations in place (reference path)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    u = inst.utilities
    w = inst.budgets
    for _ in range(K):
        dual_step_compact(state, steps.sigma, inst)
        old_x = state.x.copy()
        new_x = np.empty_like(state.x)
        for i in range(u.n_rows):
            a, b = u.row_offsets[i], u.row_offsets[i + 1]
            row = u.row(i)
            new_x[a:b] = solve_row_subproblem(
                old_x[a:b], state.p[row.col_indices], steps.tau, w[i], row,
                sections=sections, tol=subtol)
        state.x = new_x
        state.prev_x = old_x
        k = state.inner_count
        state.avg_x = (k / (k + 1.0)) * state.avg_x + state.x / (k + 1.0)
        state.avg_p = (k / (k + 1.0)) * state.avg_p + state.p / (k + 1.0)
        state.inner_count = k + 1
    return state


def restart_to_average_compact(state):
    state.x = state.avg_x.copy()
    state.p = state.avg_p.copy()
    state.prev_x = state.x.copy()
    state.inner_count = 0
    return state


def solve_fisher_pdhcg(inst, config=None):
    """Solve a Fisher instance with restarted PDHCG; returns a SolveReport."""
    from .driver import SolveConfig, run_solve

    return run_solve(inst, config or SolveConfig(), algo="pdhcg")
