"""Random instances and brute-force reference computations for tests.

Nothing here calls into the package's DP routines, so the references are
independent of the code they check.
"""
import itertools

import numpy as np

from flexdome.cmdp_core import CmdpModel


def random_model(rng, S, A, H, m=1, alpha=None, conc=1.0, payoff_scale=1.0):
    p = rng.dirichlet(np.full(S, conc), size=(H, S, A))
    p /= p.sum(axis=-1, keepdims=True)
    r = payoff_scale * rng.random((H, S, A))
    d = payoff_scale * rng.random((m, H, S, A))
    alpha = np.zeros(m) if alpha is None else alpha
    return CmdpModel(p, r, d, alpha, int(rng.integers(S)))


def random_policy(rng, S, A, H):
    return rng.dirichlet(np.ones(A), size=(H, S))


def enumerate_value(model, policy, payoff):
    """Expected payoff by summing over every (state, action) trajectory."""
    S, A, H = model.num_states, model.num_actions, model.horizon
    p = model.transitions
    total = 0.0
    for actions in itertools.product(range(A), repeat=H):
        for nexts in itertools.product(range(S), repeat=H - 1):
            states = (model.initial_state,) + nexts
            prob, ret = 1.0, 0.0
            for h in range(H):
                s, a = states[h], actions[h]
                prob *= policy[h, s, a]
                if h + 1 < H:
                    prob *= p[h, s, a, states[h + 1]]
                ret += payoff[h, s, a]
            total += prob * ret
    return total


def deterministic_policies(S, A, H):
    for choice in itertools.product(range(A), repeat=S * H):
        pol = np.zeros((H, S, A))
        idx = np.array(choice).reshape(H, S)
        for h in range(H):
            pol[h, np.arange(S), idx[h]] = 1.0
        yield pol


def grid_dual_values(model, alpha, lam_grid, chunk=50_000):
    """Dual function on a whole lambda grid by vectorised backward induction."""
    lam_grid = np.asarray(lam_grid)
    if len(lam_grid) > chunk:
        return np.concatenate([grid_dual_values(model, alpha, lam_grid[k:k + chunk], chunk)
                               for k in range(0, len(lam_grid), chunk)])
    H, S = model.horizon, model.num_states
    payoff = model.reward[None] + lam_grid[:, None, None, None] * model.constraints[0][None]
    V = np.zeros((len(lam_grid), S))
    for h in range(H - 1, -1, -1):
        Q = payoff[:, h] + np.einsum("sat,lt->lsa", model.transitions[h], V)
        V = Q.max(axis=2)
    return V[:, model.initial_state] - lam_grid * alpha
