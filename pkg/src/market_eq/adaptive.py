"""Adaptive restart decision and step-size/primal-weight controller.

Restarts fire on sufficient decay of the averaged-iterate KKT metric, on
necessary decay combined with a stall, or artificially once the inner loop
exceeds a fixed fraction of all iterations. Step sizes are reparameterized
as tau = eta / omega and sigma = eta * omega; omega rebalances primal
against dual progress at every restart, and eta tracks an observed
acceptable-step estimate. Both are exponentially smoothed in log space with
weight theta and clamped.
"""

import math
from dataclasses import dataclass


@dataclass
class RestartParams:
    beta_sufficient: float = 0.2
    beta_necessary: float = 0.8
    beta_artificial: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.beta_sufficient < self.beta_necessary < 1.0:
            raise ValueError("need 0 < beta_sufficient < beta_necessary < 1")
        if not 0.0 < self.beta_artificial <= 1.0:
            raise ValueError("need 0 < beta_artificial <= 1")


def should_restart(metric_now, metric_at_last_restart, metric_previous,
                   inner_len, total_iters, params):
    """Restart decision from averaged-iterate KKT metrics.

    True when (a) the metric fell to beta_sufficient of its value at the
    last restart, (b) it fell to beta_necessary of that value but got worse
    since the previous check, or (c) the inner loop length reached
    beta_artificial of the total iteration count.
    """
    if metric_now < 0 or metric_at_last_restart < 0 or metric_previous < 0:
        raise ValueError("metrics must be nonnegative")
    if metric_now <= params.beta_sufficient * metric_at_last_restart:
        return True
    if (metric_now <= params.beta_necessary * metric_at_last_restart
            and metric_now > metric_previous):
        return True
    return inner_len >= params.beta_artificial * total_iters


ETA_LOWER_FACTOR = 0.01
ETA_UPPER_FACTOR = 3.0
OMEGA_CHECK_INTERVAL = 3


@dataclass
class StepController:
    eta_initial: float
    omega_initial: float
    eta: float = None
    omega: float = None
    theta: float = 0.2
    omega_lower: float = None
    omega_upper: float = None
    eta_max: float = None
    restarts_since_check: int = 0

    def __post_init__(self):
        if self.eta_initial <= 0 or self.omega_initial <= 0:
            raise ValueError("initial eta and omega must be positive")
        if self.eta is None:
            self.eta = self.eta_initial
        if self.omega is None:
            self.omega = self.omega_initial
        if self.omega_lower is None:
            self.omega_lower = self.omega_initial / 4.0
        if self.omega_upper is None:
            self.omega_upper = self.omega_initial * 4.0

    @property
    def tau(self):
        return self.eta / self.omega

    @property
    def sigma(self):
        return self.eta * self.omega

    def clamp_eta(self):
        lo = ETA_LOWER_FACTOR * self.eta_initial
        hi = ETA_UPPER_FACTOR * self.eta_initial
        if self.eta_max is not None:
            # stability cap: sigma * tau * L^2 = (eta L)^2 must stay below 1,
            # which the observed-step target alone does not guarantee
            hi = min(hi, self.eta_max)
        self.eta = min(max(self.eta, lo), hi)


def update_weights(ctrl, primal_move, dual_move, eta_observed=None):
    """Controller update at a restart boundary, in place.

    The primal weight moves toward the dual/primal movement ratio in log
    space; every third restart an out-of-bounds omega snaps back to its
    initial value. When an observed acceptable step size is supplied, eta
    is smoothed toward it with the same scheme and clamped to
    [0.01, 3] * eta_initial.
    """
    if primal_move > 0.0 and dual_move > 0.0:
        log_omega = (ctrl.theta * math.log(dual_move / primal_move)
                     + (1.0 - ctrl.theta) * math.log(ctrl.omega))
        ctrl.omega = math.exp(log_omega)
    ctrl.restarts_since_check += 1
    if ctrl.restarts_since_check >= OMEGA_CHECK_INTERVAL:
        ctrl.restarts_since_check = 0
        if not ctrl.omega_lower <= ctrl.omega <= ctrl.omega_upper:
            ctrl.omega = ctrl.omega_initial
    if eta_observed is not None and eta_observed > 0.0:
        log_eta = (ctrl.theta * math.log(eta_observed)
                   + (1.0 - ctrl.theta) * math.log(ctrl.eta))
        ctrl.eta = math.exp(log_eta)
    ctrl.clamp_eta()
    return ctrl
