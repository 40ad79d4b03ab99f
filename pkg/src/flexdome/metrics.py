"""Strong (no-cancellation) regret and violation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp_core import ContractError


@dataclass(frozen=True)
class StrongMetrics:
    regret: float                 # sum_t [gap_t]_+
    violation: float              # max_i sum_t [viol_{i,t}]_+
    cum_regret: np.ndarray        # prefix series of the regret
    cum_violation: np.ndarray     # prefix series of max_i cumulative positive violation
    cum_weak_regret: np.ndarray   # prefix sums of signed gaps (diagnostic only)


def strong_metrics(gaps, violations) -> StrongMetrics:
    """``violations`` is ``(m, T)`` or a single ``(T,)`` series."""
    gaps = np.asarray(gaps, dtype=np.float64)
    violations = np.asarray(violations, dtype=np.float64)
    if violations.ndim == 1:
        violations = violations[None]
    if gaps.ndim != 1 or violations.shape[1] != gaps.shape[0]:
        raise ContractError(f"length mismatch: gaps {gaps.shape}, violations {violations.shape}")
    cum_regret = np.cumsum(np.maximum(gaps, 0.0))
    cum_violation = np.cumsum(np.maximum(violations, 0.0), axis=1).max(axis=0)
    T = gaps.shape[0]
    return StrongMetrics(
        regret=float(cum_regret[-1]) if T else 0.0,
        violation=float(cum_violation[-1]) if T else 0.0,
        cum_regret=cum_regret,
        cum_violation=cum_violation,
        cum_weak_regret=np.cumsum(gaps),
    )


@dataclass
class RunRecord:
    """Per-episode series of one run, accumulated online."""

    m: int
    metadata: dict = field(default_factory=dict)
    episode: list = field(default_factory=list)
    inst_gap: list = field(default_factory=list)
    inst_violation: list = field(default_factory=list)
    cum_strong_regret: list = field(default_factory=list)
    cum_strong_violation: list = field(default_factory=list)
    cum_weak_regret: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    alpha_hat: list = field(default_factory=list)

    def __post_init__(self):
        self._regret = 0.0
        self._weak = 0.0
        self._viol = np.zeros(self.m)

    def append(self, t: int, gap: float, violation, lam, eta: float, tau: float, eps, alpha_hat):
        violation = np.asarray(violation, dtype=np.float64)
        self._regret += max(gap, 0.0)
        self._weak += gap
        self._viol += np.maximum(violation, 0.0)
        self.episode.append(t)
        self.inst_gap.append(gap)
        self.inst_violation.append(violation.copy())
        self.cum_strong_regret.append(self._regret)
        self.cum_strong_violation.append(float(self._viol.max()))
        self.cum_weak_regret.append(self._weak)
        self.lam.append(np.array(lam, dtype=np.float64))
        self.eta.append(eta)
        self.tau.append(tau)
        self.eps.append(np.array(eps, dtype=np.float64))
        self.alpha_hat.append(np.array(alpha_hat, dtype=np.float64))

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "episode": np.asarray(self.episode),
            "inst_gap": np.asarray(self.inst_gap),
            "inst_violation": np.asarray(self.inst_violation).reshape(-1, self.m),
            "cum_strong_regret": np.asarray(self.cum_strong_regret),
            "cum_strong_violation": np.asarray(self.cum_strong_violation),
            "cum_weak_regret": np.asarray(self.cum_weak_regret),
            "lam": np.asarray(self.lam).reshape(-1, self.m),
            "eta": np.asarray(self.eta),
            "tau": np.asarray(self.tau),
            "eps": np.asarray(self.eps).reshape(-1, self.m),
            "alpha_hat": np.asarray(self.alpha_hat).reshape(-1, self.m),
        }
