"""Finite-horizon CMDP container and exact dynamic programming.

Arrays are dense and indexed ``[h, s, a, s']``. Steps are 0-based in code
(``h = 0`` is the first decision step); the value of a state at step ``H``
is zero. A policy is a plain ``(H, S, A)`` float array whose rows sum to one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_ATOL = 1e-12


class ContractError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


def _readonly(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CmdpModel:
    """Ground-truth environment ``(S, A, H, p, r, d, alpha)``.

    transitions: ``(H, S, A, S)``; reward: ``(H, S, A)``;
    constraints: ``(m, H, S, A)``; thresholds: ``(m,)``.
    """

    transitions: np.ndarray
    reward: np.ndarray
    constraints: np.ndarray
    thresholds: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "transitions", _readonly(self.transitions))
        object.__setattr__(self, "reward", _readonly(self.reward))
        object.__setattr__(self, "constraints", _readonly(self.constraints))
        object.__setattr__(self, "thresholds", _readonly(np.atleast_1d(self.thresholds)))
        object.__setattr__(self, "initial_state", int(self.initial_state))
        self._validate()

    def _validate(self):
        p, r, d, alpha = self.transitions, self.reward, self.constraints, self.thresholds
        if p.ndim != 4 or p.shape[1] != p.shape[3]:
            raise ContractError(f"transitions must be (H, S, A, S), got {p.shape}")
        H, S, A, _ = p.shape
        if min(H, S, A) < 1:
            raise ContractError("dimensions must be positive")
        if r.shape != (H, S, A):
            raise ContractError(f"reward shape {r.shape} != {(H, S, A)}")
        if d.ndim != 4 or d.shape[1:] != (H, S, A) or d.shape[0] < 1:
            raise ContractError(f"constraints shape {d.shape} != (m, {H}, {S}, {A})")
        if alpha.shape != (d.shape[0],):
            raise ContractError(f"thresholds shape {alpha.shape} != ({d.shape[0]},)")
        if not 0 <= self.initial_state < S:
            raise ContractError(f"initial state {self.initial_state} out of range")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=-1) - 1.0)) > PROB_ATOL:
            raise ContractError("transition rows must be probability vectors")
        if np.any((r < 0) | (r > 1)) or np.any((d < 0) | (d > 1)):
            raise ContractError("reward and constraint payoffs must lie in [0, 1]")
        if np.any((alpha < 0) | (alpha > H)):
            raise ContractError("thresholds must lie in [0, H]")

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def num_constraints(self) -> int:
        return self.constraints.shape[0]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """``(S, A, H, m)``."""
        return self.num_states, self.num_actions, self.horizon, self.num_constraints

    def with_thresholds(self, thresholds) -> "CmdpModel":
        return CmdpModel(self.transitions, self.reward, self.constraints,
                         thresholds, self.initial_state)


@dataclass(frozen=True)
class ValueTables:
    V: np.ndarray  # (H + 1, S); V[H] == 0
    Q: np.ndarray  # (H, S, A)
    root_value: float


def uniform_policy(S: int, A: int, H: int) -> np.ndarray:
    if min(S, A, H) < 1:
        raise ContractError("dimensions must be positive")
    return np.full((H, S, A), 1.0 / A)


def check_policy(policy, model: CmdpModel | None = None, atol: float = PROB_ATOL) -> np.ndarray:
    """Validate a policy array and return it as float64."""
    policy = np.asarray(policy, dtype=np.float64)
    if policy.ndim != 3:
        raise ContractError(f"policy must be (H, S, A), got {policy.shape}")
    if model is not None:
        H, S, A = model.horizon, model.num_states, model.num_actions
        if policy.shape != (H, S, A):
            raise ContractError(f"policy shape {policy.shape} != {(H, S, A)}")
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=-1) - 1.0)) > atol:
        raise ContractError("policy rows must be probability vectors")
    return policy


def _check_payoff(model: CmdpModel, payoff) -> np.ndarray:
    payoff = np.asarray(payoff, dtype=np.float64)
    expected = (model.horizon, model.num_states, model.num_actions)
    if payoff.shape != expected:
        raise ContractError(f"payoff shape {payoff.shape} != {expected}")
    return payoff


def evaluate_policy(model: CmdpModel, policy, payoff) -> ValueTables:
    """Exact backward recursion ``Q_h = v_h + p_h V_{h+1}``, ``V_h = <pi_h, Q_h>``."""
    policy = check_policy(policy, model, atol=1e-9)
    payoff = _check_payoff(model, payoff)
    H, S, A = payoff.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    p = model.transitions
    for h in range(H - 1, -1, -1):
        Q[h] = payoff[h] + p[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", policy[h], Q[h])
    return ValueTables(V=V, Q=Q, root_value=float(V[0, model.initial_state]))


def policy_value(model: CmdpModel, policy, payoff) -> float:
    """``V^pi_v`` at the initial state."""
    return evaluate_policy(model, policy, payoff).root_value


def occupancy_measure(model: CmdpModel, policy) -> np.ndarray:
    """Per-step state-action visitation probabilities ``q[h, s, a]``."""
    policy = check_policy(policy, model, atol=1e-9)
    H, S, A = policy.shape
    q = np.empty((H, S, A))
    state_dist = np.zeros(S)
    state_dist[model.initial_state] = 1.0
    for h in range(H):
        q[h] = state_dist[:, None] * policy[h]
        state_dist = np.einsum("sa,sat->t", q[h], model.transitions[h])
    return q


def policy_entropy(model: CmdpModel, policy) -> float:
    """Trajectory entropy ``E[-sum_h log pi_h(a_h|s_h)]`` with ``0 log 0 = 0``."""
    policy = check_policy(policy, model, atol=1e-9)
    q = occupancy_measure(model, policy)
    with np.errstate(divide="ignore"):
        neglog = np.where(policy > 0, -np.log(np.where(policy > 0, policy, 1.0)), 0.0)
    return float(np.sum(q * neglog))
