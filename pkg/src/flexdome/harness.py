"""Multi-seed experiment runner, CSV persistence and Figure-style aggregation."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import oracle
from .baselines import BaselineConfig, baseline_step
from .cmdp_core import CmdpModel, policy_value
from .env import ConfigError, ThresholdMode, ThresholdSpec, generate_instance, rng_stream, rollout
from .estimation import BonusConfig, EmpiricalModel
from .learner import LearnerState, ScheduleConfig, feasibility_window, step
from .metrics import RunRecord

log = logging.getLogger(__name__)

MAX_INSTANCE_ATTEMPTS = 10
ALGORITHM_NAMES = ("FlexDOME", "VanillaPD", "FixedRPD")


@dataclass
class ExperimentConfig:
    S: int = 20
    A: int = 5
    H: int = 5
    m: int = 1
    T: int = 80_000
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    threshold_mode: list = field(default_factory=lambda: ["gaussian", "fixed"])
    algorithms: list = field(default_factory=lambda: [{"name": "FlexDOME"}, {"name": "VanillaPD"},
                                                      {"name": "FixedRPD"}])
    delta: float = 0.1
    c_b: float = 1e-3
    c_eps: float = 1e-5
    dirichlet_conc: float = 0.1
    eval_every: int = 1
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.threshold_mode, str):
            self.threshold_mode = [self.threshold_mode]
        self.validate()

    def validate(self):
        if min(self.S, self.A, self.H, self.m) < 1:
            raise ConfigError("dims must be positive")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.eval_every < 1 or self.T % self.eval_every:
            raise ConfigError("eval_every must be a positive divisor of T")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.c_b < 0 or self.c_eps < 0 or self.dirichlet_conc <= 0:
            raise ConfigError("scalers must be nonnegative and dirichlet_conc positive")
        for mode in self.threshold_mode:
            try:
                ThresholdMode(mode)
            except ValueError:
                raise ConfigError(f"unknown threshold mode {mode!r}") from None
        labels = [algorithm_label(a) for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate algorithm labels {labels}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data.get("config", data))   # a manifest is also accepted
        if "dims" in data:
            dims = data.pop("dims")
            data.update({k: dims[k] for k in ("S", "A", "H", "m") if k in dims})
        if "scalers" in data:
            scalers = data.pop("scalers")
            data.update({k: scalers[k] for k in ("c_b", "c_eps") if k in scalers})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of everything that determines run outputs (not paths or pool size)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def algorithm_label(spec: dict) -> str:
    if "label" in spec:
        return spec["label"]
    name = spec.get("name")
    if name not in ALGORITHM_NAMES:
        raise ConfigError(f"unknown algorithm {name!r}")
    if name != "FlexDOME":
        return name
    parts = []
    if not spec.get("use_margin", True):
        parts.append("noMargin")
    if not spec.get("use_regularization", True):
        parts.append("noReg")
    if spec.get("oracle_threshold", False):
        parts.append("oracleThreshold")
    return "-".join(["FlexDOME"] + parts)


@dataclass(frozen=True)
class OracleInfo:
    alpha: list
    slater_gap: float
    v_star: float
    lam_star: list
    instance_attempt: int
    feasibility_window: float


def prepare_instance(seed: int, cfg: ExperimentConfig, mode: str):
    """Generate the seed's instance, retrying with perturbed sub-seeds if degenerate."""
    for attempt in range(MAX_INSTANCE_ATTEMPTS):
        try:
            model, spec = generate_instance(seed, cfg.S, cfg.A, cfg.H, cfg.m,
                                            cfg.dirichlet_conc, mode, attempt)
            xi = oracle.slater_gap(model)
            v_star, lam_star = oracle.cmdp_optimum(model)
        except oracle.InfeasibleInstanceError as exc:
            log.warning("seed %d attempt %d degenerate (%s); regenerating", seed, attempt, exc)
            continue
        return model, spec, xi, v_star, lam_star, attempt
    raise oracle.InfeasibleInstanceError(f"seed {seed}: no feasible instance in "
                                         f"{MAX_INSTANCE_ATTEMPTS} attempts")


def _make_learner(alg: dict, model: CmdpModel, xi: float, cfg: ExperimentConfig):
    S, A, H, m = model.dims
    s1 = model.initial_state
    name = alg["name"]
    if name == "FlexDOME":
        sched = ScheduleConfig(
            S, A, H, m, xi, cfg.delta, cfg.c_eps,
            use_margin=alg.get("use_margin", True),
            use_regularization=alg.get("use_regularization", True),
            oracle_threshold=alg.get("oracle_threshold", False),
            true_alpha=tuple(model.thresholds.tolist()),
            eta_rule=alg.get("eta_rule", "theory"),
        )
        state = LearnerState.initial(S, A, H, m, sched)
        return state, (lambda st, emp, bonus: step(st, emp, bonus, s1)), sched
    lam_max = 4.0 * H / xi
    if name == "VanillaPD":
        bcfg = BaselineConfig.vanilla(lam_max, m, alg.get("eta", "inv_sqrt"))
    else:
        bcfg = BaselineConfig.fixed_rpd(lam_max, cfg.T, m, alg.get("tau_fixed"), alg.get("eta"))
    state = LearnerState.initial(S, A, H, m, bcfg)
    return state, (lambda st, emp, bonus: baseline_step(st, emp, bonus, bcfg, s1)), None


def simulate(model: CmdpModel, spec: ThresholdSpec, alg: dict, seed: int,
             cfg: ExperimentConfig, xi: float, v_star: float,
             check_invariants: bool = False) -> RunRecord:
    """Run one learner for ``cfg.T`` episodes and return its metric series.

    Each episode: exact evaluation of the deployed policy, one learner update
    from data of earlier episodes, then a rollout of the deployed policy.
    With ``check_invariants`` the number of episodes whose new iterate left
    the dual box or the simplex is stored in ``metadata["invariant_failures"]``.
    """
    S, A, H, m = model.dims
    state, advance, sched = _make_learner(alg, model, xi, cfg)
    bonus = BonusConfig(cfg.delta, cfg.T, cfg.c_b)
    emp = EmpiricalModel.empty(S, A, H, m)
    alpha = model.thresholds
    record = RunRecord(m, metadata={"seed": seed, "algorithm": algorithm_label(alg),
                                    "threshold_mode": spec.mode.value, "toggles": alg})
    lam_max = 4.0 * H / xi
    if check_invariants:
        record.metadata["invariant_failures"] = 0
    for t in range(1, cfg.T + 1):
        deployed = state.policy
        v_r = policy_value(model, deployed, model.reward)
        v_d = np.array([policy_value(model, deployed, d) for d in model.constraints])
        state, diag = advance(state, emp, bonus)
        if check_invariants and not iterate_ok(state, lam_max):
            record.metadata["invariant_failures"] += 1
        record.append(t, v_star - v_r, alpha - v_d, diag["lam"], diag["eta"], diag["tau"],
                      diag["eps"], diag["alpha_hat"])
        emp.update(rollout(model, spec, deployed, rng_stream(seed, "rollout", t)))
    return record


def iterate_ok(state: LearnerState, lam_max: float) -> bool:
    """Dual iterate inside ``[0, lam_max]`` and every policy row on the simplex."""
    pol = state.policy
    return bool(np.all(state.lam >= 0) and np.all(state.lam <= lam_max)
                and np.all(pol >= 0) and np.max(np.abs(pol.sum(axis=-1) - 1.0)) <= 1e-9)


def csv_header(m: int) -> list[str]:
    return (["episode", "inst_gap"] + [f"inst_violation_{i}" for i in range(m)]
            + ["cum_strong_regret", "cum_strong_violation", "cum_weak_regret"]
            + [f"lambda_{i}" for i in range(m)] + ["eta", "tau"]
            + [f"eps_{i}" for i in range(m)] + [f"alpha_hat_{i}" for i in range(m)])


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_csv(path, record: RunRecord, eval_every: int = 1) -> None:
    arr = record.arrays()
    rows = [",".join(csv_header(record.m))]
    for k in range(eval_every - 1, len(arr["episode"]), eval_every):
        cells = [str(int(arr["episode"][k])), _fmt(arr["inst_gap"][k])]
        cells += [_fmt(v) for v in arr["inst_violation"][k]]
        cells += [_fmt(arr["cum_strong_regret"][k]), _fmt(arr["cum_strong_violation"][k]),
                  _fmt(arr["cum_weak_regret"][k])]
        cells += [_fmt(v) for v in arr["lam"][k]]
        cells += [_fmt(arr["eta"][k]), _fmt(arr["tau"][k])]
        cells += [_fmt(v) for v in arr["eps"][k]] + [_fmt(v) for v in arr["alpha_hat"][k]]
        rows.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(rows) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def run_filename(mode: str, label: str, seed: int) -> str:
    safe = label.replace(" ", "_").replace("(", "").replace(")", "")
    return f"{mode}__{safe}__seed{seed}.csv"


def _run_one(job):
    cfg, mode, alg, seed, out_dir = job
    t0 = time.perf_counter()
    model, spec, xi, v_star, lam_star, attempt = prepare_instance(seed, cfg, mode)
    record = simulate(model, spec, alg, seed, cfg, xi, v_star)
    path = Path(out_dir) / run_filename(mode, algorithm_label(alg), seed)
    write_csv(path, record, cfg.eval_every)
    sched = ScheduleConfig(cfg.S, cfg.A, cfg.H, cfg.m, xi, cfg.delta, cfg.c_eps)
    info = OracleInfo(model.thresholds.tolist(), xi, v_star, lam_star.tolist(), attempt,
                      feasibility_window(sched))
    return {"file": path.name, "mode": mode, "algorithm": algorithm_label(alg), "seed": seed,
            "oracle": asdict(info), "wall_time_s": time.perf_counter() - t0}


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get("FLEXDOME_OUT") or cfg.output_dir)


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run every (mode, algorithm, seed) combination; returns the CSV paths.

    Also writes ``manifest.json`` next to the CSVs.
    """
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, mode, alg, seed, str(out_dir))
            for mode in cfg.threshold_mode for alg in cfg.algorithms for seed in cfg.seeds]
    t0 = time.perf_counter()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(job) for job in jobs]
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "git_describe": git_describe(),
        "wall_time_s": time.perf_counter() - t0,
        "runs": runs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return [out_dir / r["file"] for r in runs]


# ---------------------------------------------------------------------------
# aggregation

PANELS = (("inst_gap", "instantaneous optimality gap"),
          ("inst_violation_0", "instantaneous violation"),
          ("cum_strong_regret", "strong regret"),
          ("cum_strong_violation", "strong violation"))


class AggregationError(ValueError):
    pass


def mean_stderr(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across axis 0 (zero error for a single run)."""
    series = np.asarray(series, dtype=np.float64)
    mean = series.mean(axis=0)
    if series.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, series.std(axis=0, ddof=1) / np.sqrt(series.shape[0])


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty_like(x)
    k = np.arange(1, len(x) + 1)
    lo = np.maximum(0, k - window)
    out[:] = (c[k] - c[lo]) / (k - lo)
    return out


def load_runs(run_dir) -> dict[tuple[str, str], dict[int, dict[str, np.ndarray]]]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise AggregationError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    groups: dict = {}
    for run in manifest["runs"]:
        groups.setdefault((run["mode"], run["algorithm"]), {})[run["seed"]] = \
            read_csv(run_dir / run["file"])
    return groups


def aggregate(groups) -> dict:
    stats = {}
    for key, by_seed in groups.items():
        lengths = {len(d["episode"]) for d in by_seed.values()}
        if len(lengths) != 1:
            raise AggregationError(f"{key}: runs have different lengths {lengths}")
        seeds = sorted(by_seed)
        cols = by_seed[seeds[0]].keys()
        stats[key] = {c: mean_stderr(np.stack([by_seed[s][c] for s in seeds])) for c in cols}
        stats[key]["_n"] = len(seeds)
    all_lengths = {len(v["episode"][0]) for v in stats.values()}
    if len(all_lengths) > 1:
        raise AggregationError(f"mismatched T across algorithms: {sorted(all_lengths)}")
    return stats


def _plot_panels(stats, keys, path, title, log_scale=False, window=1):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 4, figsize=(18, 3.8))
    for key in keys:
        st = stats[key]
        x = st["episode"][0]
        for ax, (col, name) in zip(axes, PANELS):
            mean, err = st[col]
            if col.startswith("inst_") and window > 1:
                mean, err = moving_average(mean, window), moving_average(err, window)
                name = f"{name} (moving avg, w={window})"
            ax.plot(x, mean, label=key[1], lw=1.2)
            ax.fill_between(x, mean - err, mean + err, alpha=0.25)
            ax.set_title(name, fontsize=9)
            ax.set_xlabel("episode")
            if log_scale and col.startswith("cum_"):
                ax.set_yscale("symlog", linthresh=1.0)
    axes[0].legend(fontsize=8)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def aggregate_and_plot(run_dir, log_scale: bool = False, window: int = 1) -> dict:
    """Mean +- standard error across seeds; writes SVG panels and ``summary.json``."""
    run_dir = Path(run_dir)
    stats = aggregate(load_runs(run_dir))
    modes = sorted({k[0] for k in stats})
    outputs = []
    for mode in modes:
        keys = sorted(k for k in stats if k[0] == mode)
        main = [k for k in keys if k[1] == "FlexDOME" or not k[1].startswith("FlexDOME")]
        ablation = [k for k in keys if k[1].startswith("FlexDOME")]
        if main:
            p = run_dir / f"{mode}_comparison.svg"
            _plot_panels(stats, main, p, f"{mode} threshold: comparison", log_scale, window)
            outputs.append(p.name)
        if len(ablation) > 1:
            p = run_dir / f"{mode}_ablation.svg"
            _plot_panels(stats, ablation, p, f"{mode} threshold: ablation", log_scale, window)
            outputs.append(p.name)
    summary = {"figures": outputs, "final": {}}
    for (mode, label), st in sorted(stats.items()):
        summary["final"].setdefault(mode, {})[label] = {
            "n_seeds": st["_n"],
            **{f"{col}_mean": float(st[col][0][-1]) for col in
               ("cum_strong_regret", "cum_strong_violation", "cum_weak_regret")},
            **{f"{col}_stderr": float(st[col][1][-1]) for col in
               ("cum_strong_regret", "cum_strong_violation")},
        }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
