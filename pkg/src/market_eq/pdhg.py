"""Restarted primal-dual hybrid gradient on the lifted formulation.

The lifted problem carries per-buyer utility totals t as explicit variables
with duals y, alongside the allocation x and prices p. Every update has a
closed form: linear ascent for (p, y) with primal extrapolation 2x - x_prev,
a quadratic-root formula for t, and a clipped gradient step for x. Inner
iterations are averaged and each restart begins from the running average.

The functions in this module are the plain-numpy reference used by tests
and small-instance diagnostics; `solve_fisher_pdhg` delegates to the fused
kernels in `driver` for production runs.
"""

from dataclasses import dataclass, field

import numpy as np

from .sparse import column_sums


@dataclass
class StepSizes:
    tau: float
    sigma: float

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class LiftedState:
    x: np.ndarray
    t: np.ndarray
    p: np.ndarray
    y: np.ndarray
    prev_x: np.ndarray = field(default=None)
    prev_t: np.ndarray = field(default=None)
    avg_x: np.ndarray = field(default=None)
    avg_t: np.ndarray = field(default=None)
    avg_p: np.ndarray = field(default=None)
    avg_y: np.ndarray = field(default=None)
    inner_count: int = 0

    def __post_init__(self):
        if self.prev_x is None:
            self.prev_x = self.x.copy()
        if self.prev_t is None:
            self.prev_t = self.t.copy()
        if self.avg_x is None:
            self.avg_x = self.x.copy()
        if self.avg_t is None:
            self.avg_t = self.t.copy()
        if self.avg_p is None:
            self.avg_p = self.p.copy()
        if self.avg_y is None:
            self.avg_y = self.y.copy()


def initial_lifted_state(inst):
    """Feasible start: column-uniform x, consistent t, budget-scaled p, y = w/t."""
    u = inst.utilities
    col_counts = u.column_counts()
    x = 1.0 / col_counts[u.col_indices].astype(np.float64)
    t = u.row_sums(u.values * x)
    p = np.full(u.n_cols, float(np.sum(inst.budgets)) / u.n_cols)
    y = inst.budgets / t
    return LiftedState(x=x, t=t, p=p, y=y)


def dual_step(state, steps, inst):
    """Ascent on (p, y) using the extrapolated primal 2x - x_prev, in place."""
    u = inst.utilities
    ext_x = 2.0 * state.x - state.prev_x
    state.p += steps.sigma * (column_sums(u, ext_x) - 1.0)
    ext_t = 2.0 * state.t - state.prev_t
    state.y += steps.sigma * (ext_t - u.row_sums(u.values * ext_x))
    return state.p, state.y


def primal_step_t(state, steps, w):
    """Exact minimizer of -w log t + y t + (t - t_k)^2 / (2 tau), in place.

    The quadratic t^2 + (tau y - t_k) t - tau w = 0 always has one positive
    root, so t stays strictly positive without a floor. The conjugate form
    is used where the direct root formula would cancel.
    """
    d = steps.tau * state.y - state.t
    root = np.sqrt(d * d + 4.0 * steps.tau * w)
    state.t = np.where(d > 0.0, 2.0 * steps.tau * w / (d + root), 0.5 * (root - d))
    return state.t


def primal_step_x(state, steps, inst):
    """Clipped gradient step on the stored pattern, in place."""
    u = inst.utilities
    grad = state.p[u.col_indices] - u.values * state.y[u.row_ids]
    state.x = np.maximum(state.x - steps.tau * grad, 0.0)
    return state.x


def _update_average(avg, value, count):
    return (count / (count + 1.0)) * avg + value / (count + 1.0)


def inner_loop(state, steps, K, inst):
    """Run K averaged inner iterations in place; returns the state.

    The running averages cover iterates 1..K of this segment (the value at
    entry is overwritten by the first update, matching the restart rule).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    w = inst.budgets
    for _ in range(K):
        dual_step(state, steps, inst)
        old_x = state.x.copy()
        old_t = state.t.copy()
        primal_step_t(state, steps, w)
        primal_step_x(state, steps, inst)
        state.prev_x = old_x
        state.prev_t = old_t
        k = state.inner_count
        state.avg_x = _update_average(state.avg_x, state.x, k)
        state.avg_t = _update_average(state.avg_t, state.t, k)
        state.avg_p = _update_average(state.avg_p, state.p, k)
        state.avg_y = _update_average(state.avg_y, state.y, k)
        state.inner_count = k + 1
    return state


def restart_to_average(state):
    """Begin the next inner loop from the running average, in place."""
    state.x = state.avg_x.copy()
    state.t = state.avg_t.copy()
    state.p = state.avg_p.copy()
    state.y = state.avg_y.copy()
    state.prev_x = state.x.copy()
    state.prev_t = state.t.copy()
    state.inner_count = 0
    return state


def lifted_operator_norm(inst, iters=50):
    """Largest singular value of the lifted constraint operator.

    The operator maps (x, t) to (column sums of x, t_i - u_i.x_i); its norm
    seeds the theory-mode step sizes. Power iteration from the all-ones
    direction, matrix free.
    """
    u = inst.utilities
    nnz = u.nnz
    n = u.n_rows
    v = np.full(nnz + n, 1.0 / np.sqrt(nnz + n))
    sigma_sq = 0.0
    for _ in range(iters):
        vx, vt = v[:nnz], v[nnz:]
        out_p = column_sums(u, vx)
        out_y = vt - u.row_sums(u.values * vx)
        back_x = out_p[u.col_indices] - u.values * out_y[u.row_ids]
        w_vec = np.concatenate([back_x, out_y])
        sigma_sq = np.linalg.norm(w_vec)
        if sigma_sq == 0.0:
            return 0.0
        v = w_vec / sigma_sq
    return float(np.sqrt(sigma_sq))


def solve_fisher_pdhg(inst, config=None):
    """Solve a Fisher instance with restarted PDHG; returns a SolveReport."""
    from .driver import SolveConfig, run_solve

    return run_solve(inst, config or SolveConfig(), algo="pdhg")
