"""Scalar decay rates of the schedule-driven error terms."""
# %%
import math

import numpy as np

from flexdome.learner import ScheduleConfig, feasibility_window
from flexdome.theory import (EULER_GAMMA, OPT_ERROR_BOUND, dominance_check, initial_decay_curve,
                             optimization_error_curve, series_initial_decay,
                             series_optimization_error)

# %% eta_t * tau_t = 1/t, so the first term is exp(-harmonic/2) ~ exp(-gamma/2) / sqrt(t)
for t in (10, 10**3, 10**5, 10**6):
    print(f"t={t:>8}  sqrt(t) * term = {series_initial_decay(t) * math.sqrt(t):.6f}")
print("limit exp(-gamma/2) =", math.exp(-EULER_GAMMA / 2))

# %% the optimization error behaves like t^(-1/3); the scaled value creeps up towards sqrt(3)
for t in (10, 10**3, 10**5, 10**6):
    print(f"t={t:>8}  t^(1/3) * term = {series_optimization_error(t) * t ** (1 / 3):.6f}")
print("sqrt(3) =", math.sqrt(3), "  analytic ceiling =", OPT_ERROR_BOUND)

# %% does the scaled margin eventually sit above both terms?
cfg = ScheduleConfig(20, 5, 5, 1, slater_gap=2.5, margin_scaler=1e-5)
ts = np.arange(1, 100_001)
margin = np.array([cfg.margin(float(t)) for t in ts])
for name, curve in (("initial decay", initial_decay_curve(ts[-1])),
                    ("optimization error", optimization_error_curve(ts[-1]))):
    rep = dominance_check(ts, lambda _t: margin, lambda _t: curve)
    print(f"{name:>20}: excess sum {rep.positive_sum:.4g}, last crossing t={rep.last_crossing}, "
          f"dominated at the end: {rep.dominates}")

# %% with the unscaled margin the feasibility window is astronomically late
print("first t with eps_t <= xi/2, c_eps=1e-5:", feasibility_window(cfg))
print("first t with eps_t <= xi/2, c_eps=1   :",
      f"{feasibility_window(ScheduleConfig(20, 5, 5, 1, 2.5, margin_scaler=1.0)):.3e}")
