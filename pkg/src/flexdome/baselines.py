"""Comparison learners.

``VanillaPD`` is the unregularised optimistic primal-dual method with
``eta_t = 1/sqrt(t)``. ``FixedRPD`` keeps a constant regularisation weight and
step size; it is a stand-in for fixed-regularisation methods, not a
reproduction of any published algorithm.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .env import ConfigError
from .estimation import BonusConfig, EmpiricalModel
from .learner import ETA_RULES, LearnerState, primal_dual_step


class BaselineKind(str, Enum):
    VANILLA_PD = "VanillaPD"
    FIXED_RPD = "FixedRPD"


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    lam_max: float
    m: int = 1
    eta: float | str = "inv_sqrt"
    tau_fixed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BaselineKind(self.kind))
        if self.lam_max <= 0:
            raise ConfigError("lam_max must be positive")
        if self.kind is BaselineKind.VANILLA_PD and self.tau_fixed != 0.0:
            raise ConfigError("VanillaPD has no regularisation")
        if isinstance(self.eta, str) and self.eta != "inv_sqrt":
            raise ConfigError(f"unknown eta rule {self.eta!r}")

    @classmethod
    def vanilla(cls, lam_max: float, m: int = 1, eta: float | str = "inv_sqrt"):
        return cls(BaselineKind.VANILLA_PD, lam_max, m, eta, 0.0)

    @classmethod
    def fixed_rpd(cls, lam_max: float, T: int, m: int = 1, tau_fixed: float | None = None,
                  eta: float | None = None):
        """Defaults evaluate FlexDOME's schedules at the final episode ``T``."""
        tau_fixed = T ** (-1.0 / 6.0) if tau_fixed is None else tau_fixed
        eta = T ** (-5.0 / 6.0) if eta is None else eta
        return cls(BaselineKind.FIXED_RPD, lam_max, m, float(eta), float(tau_fixed))

    @property
    def label(self) -> str:
        return "VanillaPD" if self.kind is BaselineKind.VANILLA_PD else "FixedRPD (stand-in)"

    def eta_at(self, t: int) -> float:
        return ETA_RULES["inv_sqrt"](float(t)) if self.eta == "inv_sqrt" else float(self.eta)


def baseline_step(state: LearnerState, emp: EmpiricalModel, bonus: BonusConfig,
                  cfg: BaselineConfig, initial_state: int):
    eta = cfg.eta_at(state.t)
    return primal_dual_step(state, emp, bonus, eta, cfg.tau_fixed, np.zeros(cfg.m),
                            cfg.lam_max, initial_state)
