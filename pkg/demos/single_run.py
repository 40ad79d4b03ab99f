"""One FlexDOME run next to the vanilla primal-dual baseline, printed as a table."""
# %%
import numpy as np

from flexdome.harness import ExperimentConfig, prepare_instance, simulate

cfg = ExperimentConfig(S=20, A=5, H=5, m=1, T=3000, seeds=[0], threshold_mode="gaussian",
                       c_b=1e-3, c_eps=1e-5)
model, spec, xi, v_star, lam_star, _ = prepare_instance(0, cfg, "gaussian")
print(f"xi = {xi:.4f}  V* = {v_star:.4f}  dual cap = {4 * cfg.H / xi:.3f}")

# %%
records = {name: simulate(model, spec, {"name": name}, 0, cfg, xi, v_star)
           for name in ("FlexDOME", "VanillaPD")}

# %% checkpoints of the cumulative strong metrics
print(f"{'episode':>8} | {'FlexDOME regret':>15} {'violation':>10} | {'Vanilla regret':>14} {'violation':>10}")
for t in (10, 100, 500, 1000, 2000, 3000):
    f, v = records["FlexDOME"], records["VanillaPD"]
    print(f"{t:>8} | {f.cum_strong_regret[t-1]:>15.2f} {f.cum_strong_violation[t-1]:>10.2f} | "
          f"{v.cum_strong_regret[t-1]:>14.2f} {v.cum_strong_violation[t-1]:>10.2f}")

# %% the dual variable and the threshold estimate
arr = records["FlexDOME"].arrays()
print("lambda at the end:", arr["lam"][-1, 0], " estimated alpha:", arr["alpha_hat"][-1, 0],
      " true alpha:", model.thresholds[0])

# %% oscillation of the instantaneous gap over the last quarter
q = cfg.T // 4
for name, rec in records.items():
    print(name, "gap std over last quarter:", np.std(np.asarray(rec.inst_gap)[-q:]))
