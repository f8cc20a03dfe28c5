"""Experiment runner: wire a policy to an environment and record regret.

Each replication gets its own seed stream, split into independent
generators for environment construction, contexts, rewards, policy
randomness and the counterfactual best-arm reward used for realised regret.
Context and reward streams therefore do not depend on the policy's choices.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np
import yaml

from .diagnostics import SpectrumReport, spectrum_report
from .env import LinearEnv, NoiseModel, RkhsEnv, ScriptedEnv
from .gram import NumericalBreakdown, checkpoint_dict
from .kernels import KernelSpec, gram_matrix, load_similarity_csv
from .policy import KernelUCB
from .sup_policy import SupKernelUCB

log = logging.getLogger(__name__)

POLICIES = ("KernelUCB", "SupKernelUCB", "UniformRandom")
CSV_COLUMNS = ("round", "arm", "reward", "exp_reward", "exp_best", "inst_regret", "cum_regret", "branch", "level")
# appended after the fixed columns so readers of the first nine are unaffected
EXTRA_COLUMNS = ("n_survivors", "best_reward")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    policy: str = "KernelUCB"
    kernel: str = "rbf"
    kernel_bandwidth: float = 1.0
    kernel_degree: int = 2
    kernel_matrix: Optional[str] = None
    gamma: float = 1.0
    eta_mode: str = "constant"
    eta_value: float = 1.0
    eta_delta: float = 0.05
    T: int = 1000
    N: int = 10
    replications: int = 1
    seed: int = 0
    env: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    recompute_every: int = 512
    tie_break: str = "lowest"
    n_jobs: int = 1
    diagnostics: bool = True

    def __post_init__(self):
        self._coerce()
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.eta_mode not in ("constant", "theory"):
            raise ConfigError(f"eta.mode must be 'constant' or 'theory', got {self.eta_mode!r}")
        if self.eta_mode == "constant" and not self.eta_value > 0:
            raise ConfigError("eta.value must be > 0")
        if not 0 < self.eta_delta < 1:
            raise ConfigError("eta.delta must lie in (0, 1)")
        if self.kernel == "precomputed" and not self.kernel_matrix:
            raise ConfigError("kernel 'precomputed' needs kernel.matrix")

    # flat "dotted" keys, as used in config files and CLI flags
    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        kwargs, env = {}, {}
        names = {f.name for f in fields(cls)}
        for key, value in mapping.items():
            key = str(key)
            if key.startswith("env."):
                env[key[4:]] = value
                continue
            name = key.replace(".", "_")
            if name not in names or name == "env":
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        kwargs["env"] = env
        try:
            cfg = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    def _coerce(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or f.name == "env":
                continue
            if f.type == "int":
                setattr(self, f.name, int(value))
            elif f.type == "float":
                setattr(self, f.name, float(value))
            elif f.type == "bool" and isinstance(value, str):
                setattr(self, f.name, value.lower() in ("1", "true", "yes", "on"))

    def to_mapping(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if key == "env":
                out.update({f"env.{k}": v for k, v in sorted(value.items())})
            else:
                out[_dotted(key)] = value
        return out


def _dotted(name: str) -> str:
    for prefix in ("kernel_", "eta_"):
        if name.startswith(prefix):
            return prefix[:-1] + "." + name[len(prefix):]
    return name


CONFIG_KEYS = tuple(_dotted(f.name) for f in fields(ExperimentConfig) if f.name != "env")


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a flat ``key: value`` YAML file; ``overrides`` replace keys one to one."""
    try:
        with open(path, encoding="utf-8") as fh:
            mapping = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a key-value mapping")
    mapping.update(overrides or {})
    return ExperimentConfig.from_mapping(mapping)


def build_kernel(kind, bandwidth=1.0, degree=2, matrix=None) -> KernelSpec:
    if kind == "precomputed":
        S = matrix if isinstance(matrix, np.ndarray) else load_similarity_csv(matrix)
        return KernelSpec.precomputed(S)
    return KernelSpec(kind, bandwidth=float(bandwidth), degree=int(degree))


def policy_kernel(cfg: ExperimentConfig) -> KernelSpec:
    return build_kernel(cfg.kernel, cfg.kernel_bandwidth, cfg.kernel_degree, cfg.kernel_matrix)


def build_env(cfg: ExperimentConfig, rng: np.random.Generator):
    e = cfg.env
    kind = e.get("kind", "linear")
    noise = NoiseModel(str(e.get("noise", "bernoulli")), float(e.get("noise_sd", 0.1)))
    if kind == "linear":
        if "theta" in e:
            theta = np.array([float(v) for v in str(e["theta"]).split(",")])
            return LinearEnv(theta, noise, rng)
        return LinearEnv.random(int(e.get("dim", 5)), float(e.get("theta_norm", 1.0)), noise, rng)
    if kind == "rkhs":
        if "kernel" in e:
            kernel = build_kernel(e["kernel"], e.get("kernel.bandwidth", 1.0), e.get("kernel.degree", 2),
                                  e.get("kernel.matrix", cfg.kernel_matrix))
        else:
            kernel = policy_kernel(cfg)
        return RkhsEnv.random(kernel, int(e.get("anchors", 10)), int(e.get("dim", 2)), noise, rng)
    if kind == "scripted":
        if "path" not in e:
            raise ConfigError("env.kind 'scripted' needs env.path")
        return ScriptedEnv.from_csv(e["path"], NoiseModel(str(e.get("noise", "none")), float(e.get("noise_sd", 0.1))))
    raise ConfigError(f"unknown env.kind {kind!r}")


class UniformRandom:
    """Baseline: every arm with equal probability."""

    def __init__(self, random_state=None):
        self.random_state = random_state
        self._rng = np.random.default_rng(random_state)

    def select_arm(self, contexts, t=None) -> int:
        return int(self._rng.integers(len(contexts)))

    def update(self, context, reward):
        return self


def build_policy(cfg: ExperimentConfig, random_state=None):
    if cfg.policy == "UniformRandom":
        return UniformRandom(random_state)
    cls = SupKernelUCB if cfg.policy == "SupKernelUCB" else KernelUCB
    similarity = load_similarity_csv(cfg.kernel_matrix) if cfg.kernel == "precomputed" else None
    return cls(kernel=cfg.kernel, bandwidth=cfg.kernel_bandwidth, degree=cfg.kernel_degree,
               similarity=similarity, gamma=cfg.gamma, eta=cfg.eta_value, eta_mode=cfg.eta_mode,
               delta=cfg.eta_delta, horizon=cfg.T, n_arms=cfg.N, recompute_every=cfg.recompute_every,
               tie_break=cfg.tie_break, random_state=random_state)


@dataclass
class RegretTrace:
    """Per-round record of one replication; rounds are 1-based, arms 0-based."""

    arm: np.ndarray
    reward: np.ndarray
    exp_reward: np.ndarray
    exp_best: np.ndarray
    branch: List[str]
    level: np.ndarray
    realized_best: Optional[np.ndarray] = None
    n_survivors: Optional[np.ndarray] = None

    @property
    def inst_regret(self) -> np.ndarray:
        return self.exp_best - self.exp_reward

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.inst_regret)

    @property
    def realized_regret(self) -> Optional[np.ndarray]:
        """Cumulative ``r_{a*_t,t} - r_t`` with the best arm's reward drawn counterfactually."""
        if self.realized_best is None:
            return None
        return np.cumsum(self.realized_best - self.reward)

    def __len__(self):
        return len(self.arm)

    def to_csv(self, path) -> None:
        cum = self.cum_regret
        inst = self.inst_regret
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS + EXTRA_COLUMNS)
            surv = self.n_survivors if self.n_survivors is not None else np.zeros(len(self), dtype=int)
            for i in range(len(self)):
                best = "" if self.realized_best is None else repr(float(self.realized_best[i]))
                w.writerow([i + 1, int(self.arm[i]), repr(float(self.reward[i])), repr(float(self.exp_reward[i])),
                            repr(float(self.exp_best[i])), repr(float(inst[i])), repr(float(cum[i])),
                            self.branch[i], int(self.level[i]), int(surv[i]), best])

    @classmethod
    def from_csv(cls, path) -> "RegretTrace":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k, f=float: np.array([f(r[k]) for r in rows])  # noqa: E731
        best = surv = None
        if rows and rows[0].get("best_reward"):
            best = col("best_reward")
        if rows and "n_survivors" in rows[0]:
            surv = col("n_survivors", int)
        return cls(col("arm", int), col("reward"), col("exp_reward"), col("exp_best"),
                   [r["branch"] for r in rows], col("level", int), best, surv)


@dataclass
class Replication:
    trace: RegretTrace
    spectrum: Optional[SpectrumReport]
    checkpoint: dict
    theta_norm: Optional[float]


def replication_seeds(seed: int, replications: int):
    return np.random.SeedSequence(seed).spawn(replications)


def run_replication(cfg: ExperimentConfig, seed_seq: np.random.SeedSequence,
                    policy_factory: Optional[Callable] = None) -> Replication:
    env_ss, ctx_ss, rew_ss, pol_ss, cf_ss = seed_seq.spawn(5)
    env = build_env(cfg, np.random.default_rng(env_ss))
    pol_seed = int(pol_ss.generate_state(1)[0])
    policy = policy_factory() if policy_factory is not None else build_policy(cfg, pol_seed)
    ctx_rng = np.random.default_rng(ctx_ss)
    rew_rng = np.random.default_rng(rew_ss)
    cf_rng = np.random.default_rng(cf_ss)

    T = cfg.T
    arm = np.zeros(T, dtype=int)
    reward, exp_reward, exp_best, realized_best = (np.zeros(T) for _ in range(4))
    level = np.zeros(T, dtype=int)
    n_surv = np.zeros(T, dtype=int)
    branch = [""] * T
    chosen = []
    for t in range(1, T + 1):
        rnd = env.draw_round(ctx_rng, cfg.N, t)
        try:
            a = policy.select_arm(rnd.contexts, t)
            decision = getattr(policy, "last_decision_", None)
            r = env.sample_reward(rew_rng, a, rnd)
            policy.update(rnd.contexts[a], r)
        except NumericalBreakdown as exc:
            exc.round_index = t
            raise
        i = t - 1
        arm[i], reward[i] = a, r
        exp_reward[i], exp_best[i] = rnd.expected[a], rnd.expected[rnd.best]
        realized_best[i] = env.sample_reward(cf_rng, rnd.best, rnd)
        chosen.append(rnd.contexts[a])
        if decision is not None:
            branch[i], level[i], n_surv[i] = decision.branch, decision.level, decision.n_survivors

    kernel = policy_kernel(cfg)
    X = np.array(chosen)
    theta_norm = getattr(env, "theta_norm", None)
    spectrum = None
    if cfg.diagnostics:
        spectrum = spectrum_report(gram_matrix(kernel, X), cfg.gamma, T=T, n_arms=cfg.N,
                                   delta=cfg.eta_delta, theta_norm=theta_norm)
    trace = RegretTrace(arm, reward, exp_reward, exp_best, branch, level, realized_best, n_surv)
    return Replication(trace, spectrum, checkpoint_dict(cfg.gamma, kernel, X, reward, cfg.recompute_every),
                       theta_norm)


def run_experiment(cfg: ExperimentConfig, policy_factory: Optional[Callable] = None, write: bool = True):
    """Run every replication; returns ``(traces, spectrum_reports)`` and writes outputs when ``out_dir`` is set."""
    seeds = replication_seeds(cfg.seed, cfg.replications)
    if cfg.n_jobs != 1 and policy_factory is None:
        from joblib import Parallel, delayed

        reps = Parallel(n_jobs=cfg.n_jobs)(delayed(run_replication)(cfg, ss) for ss in seeds)
    else:
        reps = [run_replication(cfg, ss, policy_factory) for ss in seeds]
    traces = [r.trace for r in reps]
    reports = [r.spectrum for r in reps]
    if write and cfg.out_dir:
        write_outputs(cfg, reps)
    return traces, reports


def _checkpoints(T: int):
    return sorted({max(1, T // 10), max(1, T // 2), T})


def summarize(traces, reports=None) -> dict:
    """Mean and population standard deviation of cumulative regret at T/10, T/2 and T."""
    if not traces:
        raise ValueError("need at least one trace")
    T = min(len(tr) for tr in traces)
    rows = []
    for c in _checkpoints(T):
        vals = np.array([tr.cum_regret[c - 1] for tr in traces])
        rows.append({"round": c, "mean": float(vals.mean()), "sd": float(vals.std(ddof=0))})
    out = {"replications": len(traces), "T": T, "cum_regret": rows}
    realized = [tr.realized_regret for tr in traces if tr.realized_best is not None]
    if realized:
        out["realized_regret_final_mean"] = float(np.mean([r[T - 1] for r in realized]))
    reports = [r for r in (reports or []) if r is not None]
    if reports:
        out["effective_dim_mean"] = float(np.mean([r.effective_dim for r in reports]))
        out["info_gain_mean"] = float(np.mean([r.info_gain for r in reports]))
    return out


def format_summary(summary: dict) -> str:
    lines = [f"replications={summary['replications']} T={summary['T']}", "round  mean_cum_regret  sd"]
    for row in summary["cum_regret"]:
        lines.append(f"{row['round']:>5}  {row['mean']:>15.4f}  {row['sd']:.4f}")
    for key in ("realized_regret_final_mean", "effective_dim_mean", "info_gain_mean"):
        if key in summary:
            lines.append(f"{key}: {summary[key]:.4f}")
    return "\n".join(lines)


def _rep_name(prefix: str, i: int, ext: str) -> str:
    return f"{prefix}_{i:03d}.{ext}"


def write_outputs(cfg: ExperimentConfig, reps: List[Replication]) -> None:
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.yaml"), "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(cfg.to_mapping(), fh, sort_keys=False)
    for i, rep in enumerate(reps):
        rep.trace.to_csv(os.path.join(out, _rep_name("trace", i, "csv")))
        with open(os.path.join(out, _rep_name("checkpoint", i, "json")), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(rep.checkpoint, fh)
        if rep.spectrum is not None:
            rep.spectrum.to_json(os.path.join(out, _rep_name("spectrum", i, "json")))
    summary = summarize([r.trace for r in reps], [r.spectrum for r in reps])
    summary["theta_norm"] = [r.theta_norm for r in reps]
    summary["config"] = cfg.to_mapping()
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2)


def _sorted_files(directory, prefix, ext):
    names = sorted(n for n in os.listdir(directory) if n.startswith(prefix + "_") and n.endswith("." + ext))
    return [os.path.join(directory, n) for n in names]


def report_dir(directory) -> dict:
    """Re-summarise a run directory from its trace and spectrum files."""
    traces = [RegretTrace.from_csv(p) for p in _sorted_files(directory, "trace", "csv")]
    if not traces:
        raise FileNotFoundError(f"no trace_*.csv files in {directory}")
    reports = []
    for p in _sorted_files(directory, "spectrum", "json"):
        with open(p, encoding="utf-8") as fh:
            reports.append(SpectrumReport.from_json(fh.read()))
    return summarize(traces, reports)


def spectrum_dir(directory, n_arms=None, delta=0.05, theta_norm=None) -> List[SpectrumReport]:
    """Recompute spectrum reports from the checkpoints in a run directory and write them back."""
    paths = _sorted_files(directory, "checkpoint", "json")
    if not paths:
        raise FileNotFoundError(f"no checkpoint_*.json files in {directory}")
    cfg_path = os.path.join(directory, "config.yaml")
    if n_arms is None and os.path.exists(cfg_path):
        with open(cfg_path, encoding="utf-8") as fh:
            saved = yaml.safe_load(fh) or {}
        n_arms, delta = saved.get("N"), saved.get("eta.delta", delta)
    norms = [theta_norm] * len(paths)
    summary_path = os.path.join(directory, "summary.json")
    if theta_norm is None and os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            norms = json.load(fh).get("theta_norm", norms)
    reports = []
    for i, p in enumerate(paths):
        with open(p, encoding="utf-8") as fh:
            ck = json.load(fh)
        kernel = KernelSpec.from_dict(ck["kernel"])
        X = np.asarray(ck["history"], dtype=np.intp if kernel.id_mode else float)
        rep = spectrum_report(gram_matrix(kernel, X), ck["gamma"], T=len(X), n_arms=n_arms,
                              delta=delta, theta_norm=norms[i] if i < len(norms) else None)
        rep.to_json(os.path.join(directory, _rep_name("spectrum", i, "json")))
        reports.append(rep)
    return reports
