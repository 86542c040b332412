"""Arrow-Debreu exchange equilibrium by fixed-point iteration on budgets.

Each player's budget is endogenous: w must satisfy w = E p(w), where p(w)
is the (unique) Fisher equilibrium price vector for budgets w. Starting
from uniform budgets on the unit simplex, each outer step solves the
Fisher problem with the compact solver (warm-started from the previous
outer iteration) and applies the endowment matrix to its prices. Budget
mass is conserved because prices sum to total budgets and endowment
columns sum to one; the iterate is renormalized to the simplex each step
to cancel inner-solver drift.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .driver import SolveConfig, run_solve
from .errors import ValidationError
from .instance import FisherInstance, validate

log = logging.getLogger("market_eq")

BUDGET_CONSERVATION_TOL = 1e-8
DIVERGENCE_PATIENCE = 5


@dataclass
class FixedPointTrace:
    status: str = "running"
    outer_iterations: int = 0
    budgets_history: list = field(default_factory=list)
    budget_gaps: list = field(default_factory=list)
    min_budgets: list = field(default_factory=list)
    inner_reports: list = field(default_factory=list)
    final_prices: np.ndarray = None
    outer_tol: float = 0.0

    @property
    def final_budgets(self):
        return self.budgets_history[-1] if self.budgets_history else None

    def as_dict(self):
        return {
            "status": self.status,
            "outer_iterations": self.outer_iterations,
            "outer_tol": self.outer_tol,
            "budget_gaps": [float(g) for g in self.budget_gaps],
            "min_budgets": [float(v) for v in self.min_budgets],
            "budgets_history": [[float(v) for v in w] for w in self.budgets_history],
            "final_prices": ([float(v) for v in self.final_prices]
                             if self.final_prices is not None else None),
            "inner_summaries": [
                {
                    "status": r.status,
                    "inner_iterations": r.inner_iterations,
                    "restarts": r.restarts,
                    "tolerance": r.config_echo.get("tol"),
                    "rel_kkt": r.final_residuals.rel_kkt,
                    "wall_time_seconds": r.wall_time_seconds,
                }
                for r in self.inner_reports
            ],
        }

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def apply_T(inst, w, inner_config=None, warm_start=None):
    """One budget update w -> E p(w).

    Solves the Fisher market (U, w) with the compact solver, applies the
    endowment matrix to the equilibrium prices, and renormalizes the result
    onto the unit simplex. Returns (w_next, inner_report).
    """
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ValidationError("budgets must be strictly positive")
    cfg = inner_config or SolveConfig(tol=1e-6)
    fisher = FisherInstance(inst.utilities, w)
    report = run_solve(fisher, cfg, algo="pdhcg", warm_start=warm_start)
    w_next = inst.endowments.apply(report.prices)
    total = float(np.sum(w_next))
    if total <= 0:
        raise ValidationError("endowment application produced no budget mass")
    w_next = w_next / total
    return w_next, report


def _inner_tolerance(previous_gap, outer_tol):
    # loose early, tightened as the budget gap approaches the inner noise
    # floor, never looser than 1e-5 nor tighter than outer_tol / 10
    if previous_gap < 10.0 * outer_tol:
        return outer_tol / 10.0
    return max(outer_tol / 10.0, min(1e-5, previous_gap / 20.0))


def solve_exchange(inst, outer_tol=1e-6, max_outer=100, inner_config=None):
    """Fixed-point iteration for the exchange equilibrium.

    Starts from uniform budgets, stops when the Euclidean budget gap
    ||w_next - w|| falls to outer_tol, and declares divergence after
    5 consecutive gap increases. Returns a FixedPointTrace whose status is
    one of converged / max-outer / diverging / inner-failure.
    """
    violations = validate(inst)
    if violations:
        raise ValidationError("; ".join(violations))
    base_cfg = inner_config or SolveConfig()
    n = inst.n_buyers
    w = np.full(n, 1.0 / n)
    trace = FixedPointTrace(outer_tol=outer_tol)
    trace.budgets_history.append(w.copy())
    trace.min_budgets.append(float(np.min(w)))
    warm = None
    previous_gap = np.inf
    rises = 0
    for k in range(max_outer):
        cfg_k = base_cfg.with_overrides(tol=_inner_tolerance(previous_gap, outer_tol))
        w_next, rep = apply_T(inst, w, cfg_k, warm_start=warm)
        warm = {"x": rep.allocation, "p": rep.prices}
        gap = float(np.linalg.norm(w_next - w))
        trace.inner_reports.append(rep)
        trace.budgets_history.append(w_next.copy())
        trace.budget_gaps.append(gap)
        trace.min_budgets.append(float(np.min(w_next)))
        trace.outer_iterations = k + 1
        trace.final_prices = rep.prices
        total = float(np.sum(w_next))
        if abs(total - 1.0) > BUDGET_CONSERVATION_TOL:
            raise AssertionError(f"budget mass drifted to {total!r}")
        log.info("outer %d: gap=%.3e inner_iters=%d inner_tol=%.1e",
                 k, gap, rep.inner_iterations, cfg_k.tol)
        if rep.status != "optimal":
            trace.status = "inner-failure"
            return trace
        w = w_next
        if gap <= outer_tol:
            trace.status = "converged"
            return trace
        if gap > previous_gap:
            rises += 1
            if rises >= DIVERGENCE_PATIENCE:
                trace.status = "diverging"
                return trace
        else:
            rises = 0
        previous_gap = gap
    trace.status = "max-outer"
    return trace


def verify_fixed_point(inst, w, inner_tol=1e-8, inner_config=None):
    """Residual ||w - E p(w)|| under a tightened re-solve of the inner problem."""
    cfg = (inner_config or SolveConfig()).with_overrides(tol=inner_tol)
    fisher = FisherInstance(inst.utilities, np.asarray(w, dtype=np.float64))
    report = run_solve(fisher, cfg, algo="pdhcg")
    w_image = inst.endowments.apply(report.prices)
    return float(np.linalg.norm(np.asarray(w) - w_image)), report
