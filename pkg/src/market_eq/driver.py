"""Shared restarted-solve loop for both Fisher solvers.

The loop runs fused kernel chunks between residual checks, tracks running
averages, restarts to the average when the adaptive test (or a fixed inner
length) says so, and retunes step sizes at restart boundaries. Termination
uses the relative KKT error of whichever of the last/averaged iterate is
better, measured against the original (un-normalized) instance.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .adaptive import RestartParams, StepController, should_restart, update_weights
from .errors import SubproblemError, ValidationError
from .instance import normalize, validate
from .kkt import residuals_compact, residuals_lifted
from .pdhg import initial_lifted_state, lifted_operator_norm
from .pdhcg import initial_compact_state
from .report import SolveReport, instance_fingerprint
from .sparse import SparseMatrix, column_sums, op_norm_estimate

log = logging.getLogger("market_eq")

# movement-equilibrating omega routinely travels an order of magnitude from
# any fixed initial guess; a factor-4 band forces reset thrash that measurably
# slows the tail, so the band is wider here
OMEGA_BOUND_FACTOR = 16.0


@dataclass
class SolveConfig:
    tol: float = 1e-4
    max_iters: int = 100_000
    restart: str = "adaptive"          # "adaptive" or "fixed"
    restart_k: int = 0                 # inner length when restart == "fixed"
    sections: int = 32
    subproblem_tol: float = 1e-10
    step_mode: str = "adaptive"        # "theory" or "adaptive"
    adapt_eta: bool = True
    check_every: int = 40
    threads: int = None
    restart_params: RestartParams = field(default_factory=RestartParams)

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.restart not in ("adaptive", "fixed"):
            raise ValueError("restart must be 'adaptive' or 'fixed'")
        if self.restart == "fixed" and self.restart_k < 1:
            raise ValueError("fixed restart needs restart_k >= 1")
        if self.step_mode not in ("theory", "adaptive"):
            raise ValueError("step_mode must be 'theory' or 'adaptive'")
        if self.sections < 2:
            raise ValueError("sections must be >= 2")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return {
            "tol": self.tol,
            "max_iters": self.max_iters,
            "restart": (f"fixed:{self.restart_k}" if self.restart == "fixed"
                        else "adaptive"),
            "sections": self.sections,
            "subproblem_tol": self.subproblem_tol,
            "step_mode": self.step_mode,
            "adapt_eta": self.adapt_eta,
            "check_every": self.check_every,
            "threads": self.threads,
            "beta_sufficient": self.restart_params.beta_sufficient,
            "beta_necessary": self.restart_params.beta_necessary,
            "beta_artificial": self.restart_params.beta_artificial,
        }


def _apply_thread_cap(threads):
    if threads is not None:
        import numba

        limit = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(min(max(1, int(threads)), limit))


class _CompactRun:
    """PDHCG state plumbing between kernel chunks and residual checks."""

    def __init__(self, orig, norm, cfg, warm_start=None):
        self.orig = orig
        self.norm = norm
        self.cfg = cfg
        u = norm.utilities
        self.u = u
        self.tperm, self.tindptr = u.transpose_schedule()
        if warm_start is not None:
            self.x = np.array(warm_start["x"], dtype=np.float64)
            self.p = np.array(warm_start["p"], dtype=np.float64)
            if self.x.shape != (u.nnz,) or self.p.shape != (u.n_cols,):
                raise ValueError("warm start shapes do not match the instance")
            ux = u.row_sums(u.values * self.x)
            if np.any(ux <= 0):
                raise ValueError("warm start gives some buyer zero utility")
        else:
            st = initial_compact_state(norm)
            self.x, self.p = st.x.copy(), st.p.copy()
        self.x_prev = self.x.copy()
        self.xbar, self.pbar = self.x.copy(), self.p.copy()
        self.navg = 0
        self.c_buf = np.empty(u.nnz)
        self.pass_counts = []
        # constraint operator: entry-space x -> per-good column sums, an
        # m x nnz selector matrix with one unit entry per allocation entry
        selector = SparseMatrix.from_triplets(
            u.n_cols, u.nnz, u.col_indices, np.arange(u.nnz), np.ones(u.nnz))
        self.op_norm = op_norm_estimate(selector)

    def residual_vector_norms(self):
        u = self.u
        primal = column_sums(u, self.x) - 1.0
        ux = u.row_sums(u.values * self.x)
        y = self.norm.budgets / ux
        uy = u.values * y[u.row_ids]
        col_best = np.full(u.n_cols, -np.inf)
        np.maximum.at(col_best, u.col_indices, uy)
        dual = np.minimum(self.p - col_best, 0.0)
        return float(np.linalg.norm(primal)), float(np.linalg.norm(dual))

    def run_chunk(self, iters, tau, sigma):
        pass_out = np.zeros(iters, dtype=np.int64)
        self.navg, faults = kernels.pdhcg_chunk(
            self.u.row_offsets, self.u.col_indices, self.u.values,
            self.tperm, self.tindptr, self.norm.budgets,
            self.x, self.x_prev, self.p, self.xbar, self.pbar, self.navg,
            tau, sigma, self.cfg.sections, self.cfg.subproblem_tol, iters,
            self.c_buf, pass_out)
        if faults:
            raise SubproblemError(
                f"{faults} row subproblems exceeded {kernels.MAX_ROW_PASSES} passes")
        self.pass_counts.extend(int(v) for v in pass_out)

    def residuals_last(self):
        return residuals_compact(self.orig, self.x, self.p)

    def residuals_avg(self):
        return residuals_compact(self.orig, self.xbar, self.pbar)

    def snapshot_restart_point(self):
        return self.x.copy(), self.p.copy()

    def restart_moves(self, snap):
        x0, p0 = snap
        dx = self.xbar - x0
        dp = self.pbar - p0
        interaction = abs(float(np.dot(column_sums(self.u, dx), dp)))
        return (float(np.linalg.norm(dx)), float(np.linalg.norm(dp)),
                float(np.dot(dx, dx)), float(np.dot(dp, dp)), interaction)

    def restart(self):
        self.x[:] = self.xbar
        self.p[:] = self.pbar
        self.x_prev[:] = self.x
        self.navg = 0

    def adopt_average(self):
        self.x, self.p = self.xbar.copy(), self.pbar.copy()

    def final_payload(self):
        ux = self.orig.utilities.row_sums(self.orig.utilities.values * self.x)
        return {
            "prices": self.p.copy(),
            "allocation": self.x.copy(),
            "utility_values": ux,
            "dual_values": self.orig.budgets / ux,
            "subproblem_passes": self.pass_counts,
        }


class _LiftedRun:
    """PDHG state plumbing between kernel chunks and residual checks."""

    def __init__(self, orig, norm, cfg, scales):
        self.orig = orig
        self.norm = norm
        self.cfg = cfg
        self.scales = scales
        u = norm.utilities
        self.u = u
        self.tperm, self.tindptr = u.transpose_schedule()
        st = initial_lifted_state(norm)
        self.x, self.t = st.x.copy(), st.t.copy()
        self.p, self.y = st.p.copy(), st.y.copy()
        self.x_prev, self.t_prev = self.x.copy(), self.t.copy()
        self.xbar, self.tbar = self.x.copy(), self.t.copy()
        self.pbar, self.ybar = self.p.copy(), self.y.copy()
        self.navg = 0
        self.pass_counts = None
        self.op_norm = lifted_operator_norm(norm)

    def residual_vector_norms(self):
        u = self.u
        primal = np.concatenate([column_sums(u, self.x) - 1.0,
                                 self.t - u.row_sums(u.values * self.x)])
        uy = u.values * self.y[u.row_ids]
        col_best = np.full(u.n_cols, -np.inf)
        np.maximum.at(col_best, u.col_indices, uy)
        dual = np.concatenate([self.norm.budgets / self.t - self.y,
                               np.minimum(self.p - col_best, 0.0)])
        return float(np.linalg.norm(primal)), float(np.linalg.norm(dual))

    def run_chunk(self, iters, tau, sigma):
        self.navg = kernels.pdhg_chunk(
            self.u.row_offsets, self.u.col_indices, self.u.values,
            self.tperm, self.tindptr, self.norm.budgets,
            self.x, self.x_prev, self.t, self.t_prev, self.p, self.y,
            self.xbar, self.tbar, self.pbar, self.ybar, self.navg,
            tau, sigma, iters)

    def residuals_last(self):
        return residuals_lifted(self.orig, self.x, self.t * self.scales,
                                self.p, self.y / self.scales)

    def residuals_avg(self):
        return residuals_lifted(self.orig, self.xbar, self.tbar * self.scales,
                                self.pbar, self.ybar / self.scales)

    def snapshot_restart_point(self):
        return self.x.copy(), self.t.copy(), self.p.copy(), self.y.copy()

    def restart_moves(self, snap):
        x0, t0, p0, y0 = snap
        dx = self.xbar - x0
        dt = self.tbar - t0
        dp = self.pbar - p0
        dy = self.ybar - y0
        k_dx_p = float(np.dot(column_sums(self.u, dx), dp))
        k_dt_y = float(np.dot(dt - self.u.row_sums(self.u.values * dx), dy))
        primal_sq = float(np.dot(dx, dx) + np.dot(dt, dt))
        dual_sq = float(np.dot(dp, dp) + np.dot(dy, dy))
        return (float(np.sqrt(primal_sq)), float(np.sqrt(dual_sq)),
                primal_sq, dual_sq, abs(k_dx_p + k_dt_y))

    def restart(self):
        self.x[:] = self.xbar
        self.t[:] = self.tbar
        self.p[:] = self.pbar
        self.y[:] = self.ybar
        self.x_prev[:] = self.x
        self.t_prev[:] = self.t
        self.navg = 0

    def adopt_average(self):
        self.x, self.t = self.xbar.copy(), self.tbar.copy()
        self.p, self.y = self.pbar.copy(), self.ybar.copy()

    def final_payload(self):
        return {
            "prices": self.p.copy(),
            "allocation": self.x.copy(),
            "utility_values": self.t * self.scales,
            "dual_values": self.y / self.scales,
            "subproblem_passes": None,
        }


def run_solve(inst, cfg, algo, warm_start=None):
    """Restarted solve of a Fisher instance; returns a SolveReport.

    ``warm_start``, when given, is a dict with keys "x" (entry-aligned
    allocation) and "p" (prices) used as the starting point of the compact
    solver; the lifted solver ignores it.
    """
    violations = validate(inst)
    if violations:
        raise ValidationError("; ".join(violations))
    _apply_thread_cap(cfg.threads)
    norm, scales = normalize(inst)

    if algo == "pdhcg":
        run = _CompactRun(inst, norm, cfg, warm_start=warm_start)
    elif algo == "pdhg":
        run = _LiftedRun(inst, norm, cfg, scales)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")

    L = max(run.op_norm, np.finfo(float).tiny)
    if cfg.step_mode == "theory":
        controller = None
        tau = sigma = 1.0 / (2.0 * L)
    else:
        primal_res, dual_res = run.residual_vector_norms()
        if primal_res > 1e-8 and dual_res > 1e-8:
            omega0 = max(1.0, dual_res / primal_res)
        else:
            omega0 = 1.0      # (near-)feasible starts carry no residual signal
        controller = StepController(
            eta_initial=0.9 / L, omega_initial=omega0, eta_max=0.95 / L,
            omega_lower=omega0 / OMEGA_BOUND_FACTOR,
            omega_upper=omega0 * OMEGA_BOUND_FACTOR)
        tau, sigma = controller.tau, controller.sigma
    log.info("%s solve: n=%d m=%d nnz=%d L=%.3g tau=%.3g sigma=%.3g",
             algo, inst.n_buyers, inst.n_goods, inst.utilities.nnz, L, tau, sigma)

    res_avg = run.residuals_avg()
    metric_last_restart = res_avg.rel_kkt
    metric_prev_check = res_avg.rel_kkt
    restart_snap = run.snapshot_restart_point()

    history = []
    total = 0
    restarts = 0
    status = None
    final_res = None
    t0 = time.perf_counter()
    while True:
        chunk = min(cfg.check_every, cfg.max_iters - total)
        if cfg.restart == "fixed":
            chunk = min(chunk, cfg.restart_k - run.navg)
        run.run_chunk(chunk, tau, sigma)
        total += chunk
        res_last = run.residuals_last()
        res_avg = run.residuals_avg()
        metric = min(res_last.rel_kkt, res_avg.rel_kkt)
        history.append((total, metric))
        if metric <= cfg.tol or total >= cfg.max_iters:
            if res_avg.rel_kkt < res_last.rel_kkt:
                run.adopt_average()
                final_res = res_avg
            else:
                final_res = res_last
            status = "optimal" if metric <= cfg.tol else "max-iters"
            break
        if cfg.restart == "fixed":
            do_restart = run.navg >= cfg.restart_k
        else:
            do_restart = should_restart(res_avg.rel_kkt, metric_last_restart,
                                        metric_prev_check, run.navg, total,
                                        cfg.restart_params)
        metric_prev_check = res_avg.rel_kkt
        if do_restart:
            if controller is not None:
                pm, dm, primal_sq, dual_sq, interaction = run.restart_moves(restart_snap)
                eta_obs = None
                if cfg.adapt_eta and interaction > 0.0:
                    eta_obs = (controller.omega * primal_sq
                               + dual_sq / controller.omega) / (2.0 * interaction)
                update_weights(controller, pm, dm, eta_obs)
                tau, sigma = controller.tau, controller.sigma
            run.restart()
            restarts += 1
            restart_snap = run.snapshot_restart_point()
            metric_last_restart = res_avg.rel_kkt
            metric_prev_check = res_avg.rel_kkt
    wall = time.perf_counter() - t0
    log.info("%s finished: status=%s iters=%d restarts=%d rel_kkt=%.3g (%.2fs)",
             algo, status, total, restarts, final_res.rel_kkt, wall)

    payload = run.final_payload()
    echo = cfg.as_dict()
    echo["algo"] = algo
    return SolveReport(
        solver=algo,
        status=status,
        inner_iterations=total,
        restarts=restarts,
        wall_time_seconds=wall,
        final_residuals=final_res,
        residual_history=history,
        instance_fingerprint=instance_fingerprint(inst),
        config_echo=echo,
        **payload,
    )
