"""Empirical model, optimistic estimates, and truncated policy evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cmdp_core import ContractError
from .env import ConfigError, Trajectory

PI_MIN = 1e-12


@dataclass
class EmpiricalModel:
    """Visit counts and running sums; mutated in place once per episode."""

    counts: np.ndarray               # N[h, s, a]
    transition_counts: np.ndarray    # M[h, s, a, s']
    reward_sums: np.ndarray          # [h, s, a]
    constraint_sums: np.ndarray      # [i, h, s, a]
    threshold_sum: np.ndarray        # [i]
    threshold_count: int = 0
    episodes_seen: int = 0

    @classmethod
    def empty(cls, S: int, A: int, H: int, m: int) -> "EmpiricalModel":
        return cls(
            counts=np.zeros((H, S, A), dtype=np.int64),
            transition_counts=np.zeros((H, S, A, S), dtype=np.int64),
            reward_sums=np.zeros((H, S, A)),
            constraint_sums=np.zeros((m, H, S, A)),
            threshold_sum=np.zeros(m),
        )

    @property
    def dims(self) -> tuple[int, int, int, int]:
        H, S, A = self.counts.shape
        return S, A, H, self.constraint_sums.shape[0]

    def update(self, traj: Trajectory) -> "EmpiricalModel":
        H = self.counts.shape[0]
        hs = np.arange(H)
        s, a, s_next = traj.states[:-1], traj.actions, traj.states[1:]
        # each (h, s_h, a_h) index is distinct across h, so fancy-index += is safe
        self.counts[hs, s, a] += 1
        self.transition_counts[hs, s, a, s_next] += 1
        self.reward_sums[hs, s, a] += traj.rewards
        self.constraint_sums[:, hs, s, a] += traj.constraints
        self.threshold_sum += traj.threshold_samples.sum(axis=1)
        self.threshold_count += traj.threshold_samples.shape[1]
        self.episodes_seen += 1
        return self

    def copy(self) -> "EmpiricalModel":
        return EmpiricalModel(self.counts.copy(), self.transition_counts.copy(),
                              self.reward_sums.copy(), self.constraint_sums.copy(),
                              self.threshold_sum.copy(), self.threshold_count,
                              self.episodes_seen)

    def mean_reward(self) -> np.ndarray:
        return self.reward_sums / np.maximum(1, self.counts)

    def mean_constraints(self) -> np.ndarray:
        return self.constraint_sums / np.maximum(1, self.counts)

    def mean_threshold(self) -> np.ndarray:
        if self.threshold_count == 0:
            return np.zeros_like(self.threshold_sum)
        return self.threshold_sum / self.threshold_count

    def transition_estimate(self) -> np.ndarray:
        """Row-normalised transition counts; unvisited rows are uniform."""
        S = self.transition_counts.shape[-1]
        n = self.counts[..., None]
        return np.where(n > 0, self.transition_counts / np.maximum(1, n), 1.0 / S)


def update_with_trajectory(emp: EmpiricalModel, traj: Trajectory) -> EmpiricalModel:
    return emp.update(traj)


@dataclass(frozen=True)
class BonusConfig:
    delta: float = 0.1
    T: int = 80_000
    scaler: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.scaler < 0:
            raise ConfigError("bonus scaler must be nonnegative")


def bonus_log_terms(S: int, A: int, H: int, m: int, cfg: BonusConfig) -> tuple[float, float]:
    """Confidence constants ``(L_r, L_p)`` with ``delta' = delta / 4``."""
    dp = cfg.delta / 4.0
    L_r = 0.5 * math.log(2 * S * A * H * (m + 1) * cfg.T / dp)
    L_p = 2 * S + 2 * math.log(S * A * H * cfg.T / dp)
    return L_r, L_p


@dataclass(frozen=True)
class OptimisticModel:
    reward: np.ndarray        # r_bar [h, s, a]
    constraints: np.ndarray   # d_bar [i, h, s, a]
    psi: np.ndarray           # psi_bar [h, s, a]
    psi_raw: np.ndarray       # -log pi [h, s, a], anchors the entropy cap
    alpha: np.ndarray         # alpha_bar [i]
    transitions: np.ndarray   # p_bar [h, s, a, s']
    bonus_r: np.ndarray
    bonus_p: np.ndarray

    @property
    def bonus(self) -> np.ndarray:
        return self.bonus_r + self.bonus_p


def build_optimistic_model(emp: EmpiricalModel, policy, config: BonusConfig) -> OptimisticModel:
    S, A, H, m = emp.dims
    L_r, L_p = bonus_log_terms(S, A, H, m, config)
    n = np.maximum(1, emp.counts)
    bonus_r = config.scaler * np.sqrt(L_r / n)
    bonus_p = config.scaler * H * np.sqrt(L_p / n)
    bonus = bonus_r + bonus_p
    upper = 1.0 + H
    psi_raw = -np.log(np.maximum(np.asarray(policy, dtype=np.float64), PI_MIN))
    return OptimisticModel(
        reward=np.minimum(emp.mean_reward() + bonus, upper),
        constraints=np.minimum(emp.mean_constraints() + bonus, upper),
        psi=psi_raw + bonus_p * math.log(A),
        psi_raw=psi_raw,
        alpha=emp.mean_threshold(),
        transitions=emp.transition_estimate(),
        bonus_r=bonus_r,
        bonus_p=bonus_p,
    )


@dataclass(frozen=True)
class ValueEstimates:
    Q_r: np.ndarray       # [h, s, a]
    Q_d: np.ndarray       # [i, h, s, a]
    Q_psi: np.ndarray     # [h, s, a]
    V_r: np.ndarray       # [h, s], h in 0..H
    V_d: np.ndarray       # [i, h, s]
    V_psi: np.ndarray     # [h, s]
    Q_y: np.ndarray       # composite [h, s, a]
    lam: np.ndarray
    tau: float
    initial_state: int

    @property
    def root_r(self) -> float:
        return float(self.V_r[0, self.initial_state])

    @property
    def root_d(self) -> np.ndarray:
        return self.V_d[:, 0, self.initial_state].copy()

    @property
    def root_psi(self) -> float:
        return float(self.V_psi[0, self.initial_state])

    @property
    def root_y(self) -> float:
        return self.root_r + float(self.lam @ self.root_d) + self.tau * self.root_psi


def truncated_policy_evaluation(opt: OptimisticModel, policy, lam, tau: float,
                                initial_state: int, lam_max: float | None = None) -> ValueEstimates:
    """Backward evaluation with every per-payoff Q capped at its range.

    Rewards and constraints are capped at the remaining horizon; the entropy
    payoff at ``-log pi + remaining * log A``. The composite is assembled from
    the separately truncated tables.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if np.any(~np.isfinite(lam)) or np.any(lam < 0) or (lam_max is not None and np.any(lam > lam_max)):
        raise ContractError(f"dual vector {lam} outside [0, {lam_max}]")
    if tau < 0:
        raise ContractError("tau must be nonnegative")
    policy = np.asarray(policy, dtype=np.float64)
    m, H, S, A = opt.constraints.shape
    log_a = math.log(A)
    # payoff channels: 0 = reward, 1 = entropy, 2.. = constraints
    payoff = np.concatenate([opt.reward[None], opt.psi[None], opt.constraints])
    Q = np.empty((2 + m, H, S, A))
    V = np.zeros((2 + m, H + 1, S))
    for h in range(H - 1, -1, -1):
        remaining = H - h
        cont = np.einsum("sat,kt->ksa", opt.transitions[h], V[:, h + 1])
        q = payoff[:, h] + cont
        np.minimum(q[0], remaining, out=q[0])
        np.minimum(q[1], opt.psi_raw[h] + remaining * log_a, out=q[1])
        np.minimum(q[2:], remaining, out=q[2:])
        Q[:, h] = q
        V[:, h] = np.einsum("sa,ksa->ks", policy[h], q)
    Q_y = Q[0] + np.tensordot(lam, Q[2:], axes=1) + tau * Q[1]
    return ValueEstimates(Q_r=Q[0], Q_d=Q[2:], Q_psi=Q[1], V_r=V[0], V_d=V[2:], V_psi=V[1],
                          Q_y=Q_y, lam=lam, tau=float(tau), initial_state=int(initial_state))
