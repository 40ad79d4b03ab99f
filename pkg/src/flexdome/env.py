"""Random CMDP instances and the episodic interaction protocol."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .cmdp_core import CmdpModel, ContractError
from . import oracle


class ConfigError(ValueError):
    """Invalid experiment or generator configuration."""


class ThresholdMode(str, Enum):
    FIXED = "fixed"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ThresholdSpec:
    mode: ThresholdMode
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fixed(cls, alpha) -> "ThresholdSpec":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
        return cls(ThresholdMode.FIXED, alpha, np.zeros_like(alpha))

    @classmethod
    def gaussian(cls, alpha, rel_std: float = 0.5) -> "ThresholdSpec":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
        return cls(ThresholdMode.GAUSSIAN, alpha, rel_std * alpha)

    @classmethod
    def from_mode(cls, mode, alpha) -> "ThresholdSpec":
        mode = ThresholdMode(mode)
        return cls.fixed(alpha) if mode is ThresholdMode.FIXED else cls.gaussian(alpha)


def rng_stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    """Counter-based generator for one labelled substream.

    The stream depends only on ``(seed, label, counters)``, never on how many
    draws other streams made, so runs reproduce regardless of execution order.
    """
    key = (zlib.crc32(label.encode()),) + tuple(int(c) for c in counters)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def generate_instance(seed: int, S: int, A: int, H: int, m: int = 1,
                      dirichlet_conc: float = 0.1,
                      threshold_mode: str | ThresholdMode = ThresholdMode.FIXED,
                      attempt: int = 0) -> tuple[CmdpModel, ThresholdSpec]:
    """Sample a conflicting reward/constraint CMDP.

    Transitions are Dirichlet(``dirichlet_conc``) per (h, s, a); rewards are
    drawn once from Bernoulli(0.5); every constraint is ``1 - r``. The mean
    threshold is half the largest achievable constraint value.
    """
    if dirichlet_conc <= 0:
        raise ConfigError("dirichlet_conc must be positive")
    if min(S, A, H, m) < 1:
        raise ConfigError("dimensions must be positive")
    mode = ThresholdMode(threshold_mode)
    rng = rng_stream(seed, "instance", attempt)
    p = rng.dirichlet(np.full(S, dirichlet_conc), size=(H, S, A))
    p /= p.sum(axis=-1, keepdims=True)
    r = rng.binomial(1, 0.5, size=(H, S, A)).astype(np.float64)
    d = np.broadcast_to(1.0 - r, (m, H, S, A)).copy()
    s1 = int(rng.integers(S))
    model = CmdpModel(p, r, d, np.zeros(m), s1)
    alpha, _ = oracle.slater_quantities(model)
    return model.with_thresholds(alpha), ThresholdSpec.from_mode(mode, alpha)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray              # (H + 1,)
    actions: np.ndarray             # (H,)
    rewards: np.ndarray             # (H,)
    constraints: np.ndarray         # (m, H)
    threshold_samples: np.ndarray   # (m, H)

    @property
    def steps(self):
        H = len(self.actions)
        return [(int(self.states[h]), int(self.actions[h]), float(self.rewards[h]),
                 self.constraints[:, h].copy(), int(self.states[h + 1])) for h in range(H)]


def sample_thresholds(spec: ThresholdSpec, rng: np.random.Generator, H: int,
                      episodes: int | None = None) -> np.ndarray:
    """Per-step threshold observations, shape ``(m, H)`` or ``(episodes, m, H)``.

    One draw per episode and constraint, repeated over the H steps. Gaussian
    draws are not clipped to ``[0, H]``.
    """
    shape = (len(spec.mean),) if episodes is None else (episodes, len(spec.mean))
    if spec.mode is ThresholdMode.GAUSSIAN:
        draw = rng.normal(spec.mean, spec.std, size=shape)
    else:
        draw = np.broadcast_to(spec.mean, shape)
    return np.repeat(np.asarray(draw, dtype=np.float64)[..., None], H, axis=-1)


def _sample(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw that never returns a zero-probability index."""
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    k = min(k, len(probs) - 1)
    # u beyond a rounded-down cdf total lands on the tail; step back to mass
    while probs[k] == 0.0 and k > 0:
        k -= 1
    return k


def rollout(model: CmdpModel, spec: ThresholdSpec, policy, rng: np.random.Generator) -> Trajectory:
    """Run one H-step episode from the fixed initial state."""
    H = model.horizon
    u = rng.random((H, 2))
    thresholds = sample_thresholds(spec, rng, H)
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    states[0] = model.initial_state
    p = model.transitions
    for h in range(H):
        s = states[h]
        a = _sample(policy[h, s], u[h, 0])
        actions[h] = a
        states[h + 1] = _sample(p[h, s, a], u[h, 1])
    hs = np.arange(H)
    rewards = model.reward[hs, states[:-1], actions]
    constraints = model.constraints[:, hs, states[:-1], actions]
    return Trajectory(states, actions, rewards, constraints, thresholds)


def instance_to_dict(model: CmdpModel, spec: ThresholdSpec) -> dict:
    S, A, H, m = model.dims
    return {
        "dims": {"S": S, "A": A, "H": H, "m": m},
        "s1": model.initial_state,
        "p": model.transitions.tolist(),
        "r": model.reward.tolist(),
        "d": model.constraints.tolist(),
        "alpha": model.thresholds.tolist(),
        "threshold_spec": {"mode": spec.mode.value, "mean": spec.mean.tolist(),
                           "std": spec.std.tolist()},
    }


def instance_from_dict(data: dict) -> tuple[CmdpModel, ThresholdSpec]:
    try:
        model = CmdpModel(data["p"], data["r"], data["d"], data["alpha"], data["s1"])
        ts = data.get("threshold_spec") or {"mode": "fixed", "mean": data["alpha"],
                                            "std": [0.0] * len(data["alpha"])}
    except KeyError as exc:
        raise ConfigError(f"instance file missing field {exc}") from None
    except ContractError as exc:
        raise ConfigError(f"invalid instance: {exc}") from None
    dims = data.get("dims")
    if dims and (dims["S"], dims["A"], dims["H"], dims["m"]) != model.dims:
        raise ConfigError("instance dims disagree with array shapes")
    spec = ThresholdSpec(ThresholdMode(ts["mode"]), np.asarray(ts["mean"], dtype=np.float64),
                         np.asarray(ts["std"], dtype=np.float64))
    return model, spec


def save_instance(path, model: CmdpModel, spec: ThresholdSpec) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(model, spec)))


def load_instance(path) -> tuple[CmdpModel, ThresholdSpec]:
    return instance_from_dict(json.loads(Path(path).read_text()))
