"""FlexDOME: margin-tightened, entropy/l2-regularised optimistic primal-dual updates."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cmdp_core import ContractError, uniform_policy
from .env import ConfigError
from .estimation import (BonusConfig, EmpiricalModel, build_optimistic_model,
                         truncated_policy_evaluation)


class NumericalError(FloatingPointError):
    """A learner update produced non-finite values."""


ETA_RULES = {
    "theory": lambda t: t ** (-5.0 / 6.0),
    "inv_sqrt": lambda t: t ** -0.5,
}


@dataclass(frozen=True)
class ScheduleConfig:
    """Step-size, regularisation and margin schedules for one run.

    ``slater_gap`` fixes the dual box ``[0, 4H / slater_gap]^m``. The three
    toggles switch off the margin, the regularisation, or replace the
    estimated threshold with the true one (ablation arms).
    """

    S: int
    A: int
    H: int
    m: int
    slater_gap: float
    delta: float = 0.1
    margin_scaler: float = 1.0
    use_margin: bool = True
    use_regularization: bool = True
    oracle_threshold: bool = False
    true_alpha: tuple[float, ...] | None = None
    eta_rule: str = "theory"

    def __post_init__(self):
        if self.slater_gap <= 0:
            raise ConfigError("slater_gap must be positive")
        if self.margin_scaler < 0:
            raise ConfigError("margin_scaler must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.eta_rule not in ETA_RULES:
            raise ConfigError(f"unknown eta rule {self.eta_rule!r}")
        if self.oracle_threshold and self.true_alpha is None:
            raise ConfigError("oracle_threshold needs true_alpha")

    @property
    def lam_max(self) -> float:
        return 4.0 * self.H / self.slater_gap

    @property
    def c_b(self) -> float:
        """Statistical-error constant from the cumulative estimation bound."""
        S, A, H, m, xi = self.S, self.A, self.H, self.m, self.slater_gap
        return ((1 + 8 * m * H / xi) * (4 * H * math.sqrt(2 * S * A) * (H * math.sqrt(S) + H + 1))
                + (4 * m * H / xi) * math.sqrt(2 * H))

    def margin(self, t: float) -> float:
        """Unscaled-by-toggle margin value ``eps_t`` (same for every constraint)."""
        S, A, H = self.S, self.A, self.H
        return (self.margin_scaler * 3.6 * math.sqrt(H ** 3 * self.c_b) * t ** (-1.0 / 6.0)
                * math.log(4 * S * A * H * t / self.delta) ** 0.25)


def schedules(t: int, config: ScheduleConfig) -> tuple[float, float, np.ndarray]:
    """``(eta_t, tau_t, eps_t)`` for episode ``t >= 1``."""
    if t < 1:
        raise ContractError(f"episode index must be >= 1, got {t}")
    eta = ETA_RULES[config.eta_rule](float(t))
    tau = t ** (-1.0 / 6.0) if config.use_regularization else 0.0
    eps = config.margin(t) if config.use_margin else 0.0
    return eta, tau, np.full(config.m, eps)


def feasibility_window(config: ScheduleConfig) -> float:
    """Smallest ``t`` with ``eps_t <= xi / 2``.

    Returned as a float because with unscaled constants it can exceed 1e20.
    """
    target = config.slater_gap / 2.0
    if not config.use_margin or config.margin(1) <= target:
        return 1.0
    lo, hi = 0.0, 1.0   # bracket on log10(t)
    while config.margin(10.0 ** hi) > target:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if config.margin(10.0 ** mid) > target:
            lo = mid
        else:
            hi = mid
    return math.ceil(10.0 ** hi)


@dataclass
class LearnerState:
    t: int
    policy: np.ndarray
    lam: np.ndarray
    config: object = None

    @classmethod
    def initial(cls, S: int, A: int, H: int, m: int, config=None) -> "LearnerState":
        return cls(1, uniform_policy(S, A, H), np.zeros(m), config)


def policy_update(policy: np.ndarray, Q: np.ndarray, eta: float) -> np.ndarray:
    """Multiplicative-weights step ``pi' ~ pi * exp(eta * Q)`` per (h, s)."""
    if not np.all(np.isfinite(Q)):
        raise NumericalError("non-finite value estimate in policy update")
    if eta <= 0:
        raise ContractError("eta must be positive")
    w = policy * np.exp(eta * (Q - Q.max(axis=-1, keepdims=True)))
    new = w / w.sum(axis=-1, keepdims=True)
    if not np.all(np.isfinite(new)):
        raise NumericalError("policy update produced non-finite probabilities")
    return new


def dual_update(lam, V_d, eps, alpha_bar, eta: float, tau: float, lam_max: float) -> np.ndarray:
    """Projected descent on the regularised dual, clipped to ``[0, lam_max]``."""
    lam = np.asarray(lam, dtype=np.float64)
    slack = np.asarray(V_d) - np.asarray(eps) - np.asarray(alpha_bar)
    return np.clip((1.0 - eta * tau) * lam - eta * slack, 0.0, lam_max)


def primal_dual_step(state: LearnerState, emp: EmpiricalModel, bonus: BonusConfig,
                     eta: float, tau: float, eps: np.ndarray, lam_max: float,
                     initial_state: int, true_alpha=None):
    """One optimistic evaluation plus primal and dual update; shared by all learners."""
    opt = build_optimistic_model(emp, state.policy, bonus)
    est = truncated_policy_evaluation(opt, state.policy, state.lam, tau, initial_state, lam_max)
    alpha_bar = opt.alpha if true_alpha is None else np.asarray(true_alpha, dtype=np.float64)
    policy = policy_update(state.policy, est.Q_y, eta)
    lam = dual_update(state.lam, est.root_d, eps, alpha_bar, eta, tau, lam_max)
    diagnostics = {
        "t": state.t, "eta": eta, "tau": tau, "eps": np.asarray(eps, dtype=np.float64),
        "lam": state.lam.copy(), "alpha_hat": opt.alpha.copy(),
        "V_hat_r": est.root_r, "V_hat_d": est.root_d, "V_hat_y": est.root_y,
    }
    return replace(state, t=state.t + 1, policy=policy, lam=lam), diagnostics


def step(state: LearnerState, emp: EmpiricalModel, bonus: BonusConfig, initial_state: int):
    """Advance FlexDOME by one episode; ``state.config`` must be a ScheduleConfig."""
    cfg: ScheduleConfig = state.config
    eta, tau, eps = schedules(state.t, cfg)
    true_alpha = cfg.true_alpha if cfg.oracle_threshold else None
    return primal_dual_step(state, emp, bonus, eta, tau, eps, cfg.lam_max,
                            initial_state, true_alpha)
