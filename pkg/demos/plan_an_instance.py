"""Generate a random conflicting-objective CMDP and solve it exactly."""
# %%
import numpy as np

from flexdome.cmdp_core import evaluate_policy, uniform_policy
from flexdome.env import generate_instance
from flexdome.oracle import cmdp_optimum, dual_value, max_value, slater_gap

model, spec = generate_instance(seed=0, S=20, A=5, H=5, m=1)
S, A, H, m = model.dims
print("dims", model.dims, "start state", model.initial_state)

# %% the constraint payoff is the complement of the reward, so they pull in opposite directions
print("d + r == 1 everywhere:", np.all(model.constraints[0] + model.reward == 1))

# %% thresholds sit at half of the best achievable constraint value
best_r, _ = max_value(model, model.reward)
best_d, _ = max_value(model, model.constraints[0])
print(f"max V_r = {best_r:.4f}   max V_d = {best_d:.4f}   alpha = {model.thresholds[0]:.4f}")
print(f"slater gap = {slater_gap(model):.4f}")

# %% constrained optimum through the Lagrangian dual
v_star, lam_star = cmdp_optimum(model)
print(f"V* = {v_star:.6f} at lambda* = {lam_star[0]:.6f}")

# with d = 1 - r every policy has V_r + V_d = H, so the dual is flat in the
# reward direction at lambda = 1 and V* = H - alpha
print("H - alpha =", H - model.thresholds[0])

# %% dual function on a coarse grid
for lam in np.linspace(0, 3, 7):
    print(f"g({lam:.2f}) = {dual_value(model, [lam]):.4f}")

# %% the uniform policy for comparison
u = uniform_policy(S, A, H)
print("uniform: V_r =", evaluate_policy(model, u, model.reward).root_value,
      " V_d =", evaluate_policy(model, u, model.constraints[0]).root_value)
