"""Ground-truth planning on a known CMDP.

The constrained optimum is found through the Lagrangian dual
``g(lam) = max_pi V_{r + lam.d}^pi - lam.alpha``, which is convex and piecewise
linear in ``lam``; strong duality for CMDPs makes ``min g`` the optimal value.
"""
from __future__ import annotations

import math

import numpy as np

from .cmdp_core import CmdpModel, ContractError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleInstanceError(ValueError):
    """No policy strictly satisfies every constraint."""


def max_value(model: CmdpModel, payoff) -> tuple[float, np.ndarray]:
    """Optimal unconstrained value for ``payoff`` and a deterministic greedy policy.

    Ties go to the lowest action index.
    """
    payoff = np.asarray(payoff, dtype=np.float64)
    H, S, A = model.horizon, model.num_states, model.num_actions
    if payoff.shape != (H, S, A):
        raise ContractError(f"payoff shape {payoff.shape} != {(H, S, A)}")
    V = np.zeros(S)
    policy = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q = payoff[h] + model.transitions[h] @ V
        best = np.argmax(Q, axis=1)
        policy[h, np.arange(S), best] = 1.0
        V = Q[np.arange(S), best]
    return float(V[model.initial_state]), policy


def slater_quantities(model: CmdpModel) -> tuple[np.ndarray, float]:
    """Thresholds at half the best constraint value, and the resulting Slater gap.

    Returns ``(alpha, xi)`` with ``alpha_i = max V_{d_i} / 2`` and
    ``xi = min_i (max V_{d_i} - alpha_i)``.
    """
    best = np.array([max_value(model, d)[0] for d in model.constraints])
    if np.any(best <= 0):
        raise InfeasibleInstanceError("a constraint has zero achievable value")
    alpha = 0.5 * best
    return alpha, float(np.min(best - alpha))


def slater_gap(model: CmdpModel, alpha=None) -> float:
    """``min_i (max_pi V_{d_i}^pi - alpha_i)`` for the given (or model) thresholds."""
    alpha = model.thresholds if alpha is None else np.atleast_1d(alpha)
    best = np.array([max_value(model, d)[0] for d in model.constraints])
    return float(np.min(best - alpha))


def dual_value(model: CmdpModel, lam, alpha=None) -> float:
    alpha = model.thresholds if alpha is None else np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    payoff = model.reward + np.tensordot(lam, model.constraints, axes=1)
    return max_value(model, payoff)[0] - float(lam @ alpha)


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-9):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    The best point ever probed is returned, endpoints included, so a minimum
    sitting on the boundary is hit exactly.
    """
    best_x, best_f = lo, f(lo)
    f_hi = f(hi)
    if f_hi < best_f:
        best_x, best_f = hi, f_hi
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        for x, fx in ((c, fc), (d, fd)):
            if fx < best_f:
                best_x, best_f = x, fx
    return best_x, best_f


def cmdp_optimum(model: CmdpModel, alpha=None, subgradient_iters: int = 100_000):
    """Optimal constrained value ``V_r^{pi*}`` and a minimising dual vector.

    Single constraint: golden-section search on ``[0, 4H/xi]`` to width 1e-9.
    Several constraints: projected subgradient descent on the dual box.
    """
    alpha = model.thresholds if alpha is None else np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    xi = slater_gap(model, alpha)
    if xi <= 0:
        raise InfeasibleInstanceError(f"no strictly feasible policy (slater gap {xi:.3g})")
    lam_max = 4.0 * model.horizon / xi
    m = model.num_constraints

    if m == 1:
        lam, value = golden_section_min(lambda x: dual_value(model, [x], alpha), 0.0, lam_max)
        return float(np.clip(value, 0.0, model.horizon)), np.array([lam])

    lam = np.zeros(m)
    lam_sum = np.zeros(m)
    best_value, best_lam = np.inf, lam.copy()
    for k in range(1, subgradient_iters + 1):
        payoff = model.reward + np.tensordot(lam, model.constraints, axes=1)
        v, greedy = max_value(model, payoff)
        value = v - float(lam @ alpha)
        if value < best_value:
            best_value, best_lam = value, lam.copy()
        grad = np.array([_greedy_value(model, greedy, d) for d in model.constraints]) - alpha
        lam = np.clip(lam - (lam_max / math.sqrt(k)) * grad, 0.0, lam_max)
        lam_sum += lam
    avg = lam_sum / subgradient_iters
    avg_value = dual_value(model, avg, alpha)
    if avg_value < best_value:
        best_value, best_lam = avg_value, avg
    return float(np.clip(best_value, 0.0, model.horizon)), best_lam


def _greedy_value(model: CmdpModel, policy: np.ndarray, payoff: np.ndarray) -> float:
    V = np.zeros(model.num_states)
    for h in range(model.horizon - 1, -1, -1):
        V = np.einsum("sa,sa->s", policy[h], payoff[h] + model.transitions[h] @ V)
    return float(V[model.initial_state])
