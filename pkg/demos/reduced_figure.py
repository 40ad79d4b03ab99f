"""Reduced-scale comparison and ablation runs, aggregated into SVG panels.

Takes a few minutes on one core; raise ``T`` and the seed list for the full
80000-episode, five-seed setting.
"""
# %%
import json
import sys
from pathlib import Path

from flexdome.harness import ExperimentConfig, aggregate_and_plot, run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/reduced")
T = int(sys.argv[2]) if len(sys.argv) > 2 else 5000

cfg = ExperimentConfig(
    S=20, A=5, H=5, m=1, T=T, seeds=[0, 1, 2], threshold_mode=["gaussian", "fixed"],
    algorithms=[{"name": "FlexDOME"}, {"name": "VanillaPD"}, {"name": "FixedRPD"},
                {"name": "FlexDOME", "use_regularization": False},
                {"name": "FlexDOME", "use_margin": False},
                {"name": "FlexDOME", "oracle_threshold": True}],
    c_b=1e-3, c_eps=1e-5, eval_every=10, output_dir=str(out))

# %%
run_experiment(cfg)
summary = aggregate_and_plot(out, log_scale=False, window=50)

# %%
for mode, arms in summary["final"].items():
    print(mode)
    for label, s in arms.items():
        print(f"  {label:<26} strong regret {s['cum_strong_regret_mean']:>9.2f}"
              f"   strong violation {s['cum_strong_violation_mean']:>9.2f}")
print(json.dumps(summary["figures"]))
