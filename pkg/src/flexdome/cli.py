"""Command line entry point: ``flexdome {gen,run,plot,check,oracle}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import oracle, theory
from .env import ConfigError, generate_instance, load_instance, save_instance
from .harness import AggregationError, ExperimentConfig, aggregate_and_plot, run_experiment
from .learner import NumericalError, ScheduleConfig, feasibility_window

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_dims(text: str) -> tuple[int, int, int, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("--dims expects S,A,H,m")
    return tuple(parts)


def cmd_gen(args) -> int:
    S, A, H, m = args.dims
    model, spec = generate_instance(args.seed, S, A, H, m, args.conc, args.mode)
    save_instance(args.out, model, spec)
    print(f"wrote {args.out}: S={S} A={A} H={H} m={m} s1={model.initial_state} "
          f"alpha={model.thresholds.tolist()}")
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    paths = run_experiment(cfg)
    print(f"wrote {len(paths)} run files to {paths[0].parent if paths else cfg.output_dir}")
    return 0


def cmd_plot(args) -> int:
    summary = aggregate_and_plot(args.dir, log_scale=args.log_scale, window=args.window)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_check(args) -> int:
    sched = ScheduleConfig(20, 5, 5, 1, slater_gap=2.5, delta=0.1, margin_scaler=args.c_eps)
    rows = theory.run_checks(margin_config=sched)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    print(f"feasibility window (eps_t <= xi/2) at c_eps={args.c_eps:g}: t >= {feasibility_window(sched):.4g}")
    return 0 if all(r[1] for r in rows) else 1


def cmd_oracle(args) -> int:
    model, _ = load_instance(args.instance)
    v_r, _ = oracle.max_value(model, model.reward)
    best_d = [oracle.max_value(model, d)[0] for d in model.constraints]
    xi = oracle.slater_gap(model)
    v_star, lam_star = oracle.cmdp_optimum(model)
    print(json.dumps({"max_reward_value": v_r, "max_constraint_values": best_d,
                      "alpha": model.thresholds.tolist(), "slater_gap": xi,
                      "v_star": v_star, "lambda_star": lam_star.tolist()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexdome", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dims", type=_parse_dims, default=(20, 5, 5, 1), help="S,A,H,m")
    p.add_argument("--conc", type=float, default=0.1, help="Dirichlet concentration")
    p.add_argument("--mode", choices=["fixed", "gaussian"], default="fixed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run an experiment from a JSON config (or manifest)")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="aggregate a run directory into SVG panels")
    p.add_argument("--dir", required=True)
    p.add_argument("--log-scale", action="store_true")
    p.add_argument("--window", type=int, default=1, help="moving-average window for instantaneous curves")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("check", help="numeric decay-rate checks")
    p.add_argument("--c-eps", type=float, default=1e-5, help="margin scaler for the dominance rows")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="exact planning quantities for an instance JSON")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AggregationError, oracle.InfeasibleInstanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
