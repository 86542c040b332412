"""Solve reports: the machine-readable artifact every solver run produces.

Reports are self-contained: they carry the final primal/dual state on the
instance's stored pattern, so residuals can be recomputed exactly from the
report plus the instance files. Floats survive the JSON round trip bit for
bit (repr serialization).
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .instance import ExchangeInstance, FisherInstance
from .kkt import Residuals


def instance_fingerprint(inst):
    """SHA-256 over the instance's dimensions and raw arrays."""
    h = hashlib.sha256()
    u = inst.utilities
    h.update(np.int64([u.n_rows, u.n_cols]).tobytes())
    h.update(u.row_offsets.tobytes())
    h.update(u.col_indices.tobytes())
    h.update(u.values.tobytes())
    if isinstance(inst, FisherInstance):
        h.update(b"fisher")
        h.update(inst.budgets.tobytes())
    elif isinstance(inst, ExchangeInstance):
        e = inst.endowments
        h.update(b"exchange")
        h.update(e.row_offsets.tobytes())
        h.update(e.col_indices.tobytes())
        h.update(e.values.tobytes())
    return h.hexdigest()


@dataclass
class SolveReport:
    solver: str
    status: str
    inner_iterations: int
    restarts: int
    wall_time_seconds: float
    final_residuals: Residuals
    residual_history: list
    prices: np.ndarray
    allocation: np.ndarray
    utility_values: np.ndarray = None
    dual_values: np.ndarray = None
    subproblem_passes: list = None
    instance_fingerprint: str = ""
    config_echo: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "solver": self.solver,
            "status": self.status,
            "inner_iterations": self.inner_iterations,
            "restarts": self.restarts,
            "wall_time_seconds": self.wall_time_seconds,
            "final_residuals": self.final_residuals.as_dict(),
            "residual_history": [[int(i), float(r)] for i, r in self.residual_history],
            "prices": [float(v) for v in self.prices],
            "allocation": [float(v) for v in self.allocation],
            "instance_fingerprint": self.instance_fingerprint,
            "config_echo": self.config_echo,
        }
        if self.utility_values is not None:
            out["utility_values"] = [float(v) for v in self.utility_values]
        if self.dual_values is not None:
            out["dual_values"] = [float(v) for v in self.dual_values]
        if self.subproblem_passes is not None:
            out["subproblem_passes"] = [int(v) for v in self.subproblem_passes]
        return out

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        res = d["final_residuals"]
        return cls(
            solver=d["solver"],
            status=d["status"],
            inner_iterations=d["inner_iterations"],
            restarts=d["restarts"],
            wall_time_seconds=d["wall_time_seconds"],
            final_residuals=Residuals(res["r_primal"], res["r_dual"],
                                      res["r_gap"], res["rel_kkt"]),
            residual_history=[(int(i), float(r)) for i, r in d["residual_history"]],
            prices=np.asarray(d["prices"], dtype=np.float64),
            allocation=np.asarray(d["allocation"], dtype=np.float64),
            utility_values=(np.asarray(d["utility_values"], dtype=np.float64)
                            if "utility_values" in d else None),
            dual_values=(np.asarray(d["dual_values"], dtype=np.float64)
                         if "dual_values" in d else None),
            subproblem_passes=d.get("subproblem_passes"),
            instance_fingerprint=d.get("instance_fingerprint", ""),
            config_echo=d.get("config_echo", {}),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
