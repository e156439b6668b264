"""Experiment orchestration: trials, regret traces, aggregation, CSV export.

The canonical benchmark settings (matching the synthetic protocol this
package reproduces) are

    setting 1: d1=40, d2=5,  K=25, T=80000   (many shared parameters)
    setting 2: d1=5,  d2=40, K=25, T=80000   (many arm parameters)
    setting 3: d1=5,  d2=5,  T=30000, K swept over a grid

each run over ``n_envs`` independently seeded environments with ``n_trials``
reward-noise trials per environment.  Trials are embarrassingly parallel;
results are merged in a fixed order so output files are byte-stable.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DiagnosticsTrace, PulledFeatureTracker, sample_diagnostics
from .envs import SyntheticEnvConfig, generate_environment
from .linalg import SparseHybridVector
from .model import HybridParams, mean_rewards
from .policies import (
    ALGORITHMS,
    ORACLE,
    OraclePolicy,
    PolicyConfig,
    make_policy,
)
from .rng import derive_seed, stream

SETTING_SHAPES = {
    1: {"d1": 40, "d2": 5, "n_arms": 25, "T": 80000},
    2: {"d1": 5, "d2": 40, "n_arms": 25, "T": 80000},
    3: {"d1": 5, "d2": 5, "n_arms": None, "T": 30000},
}
DEFAULT_K_GRID = (10, 25, 50, 100, 200, 400)
VALID_ALGOS = (*ALGORITHMS, ORACLE)


@dataclass(frozen=True)
class Environment:
    """One reward world: true parameters plus a context stream."""

    env_id: int
    env_seed: int
    params: HybridParams
    contexts: object  # anything with .T and .round(t)
    noise_std: float


def synthetic_environment(cfg: SyntheticEnvConfig, env_id: int = 0) -> Environment:
    params, contexts = generate_environment(cfg)
    return Environment(env_id, cfg.env_seed, params, contexts, cfg.noise_std)


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved description of one experiment run."""

    setting: int | str
    algos: tuple[str, ...]
    d1: int
    d2: int
    n_arms: int
    T: int
    n_envs: int = 5
    n_trials: int = 5
    noise_std: float = 0.1
    S: float = 1.0
    delta: float = 0.1
    base_seed: int = 0
    diagnostics_every: int = 0
    k_grid: tuple[int, ...] = ()
    threads: int = 1

    def __post_init__(self):
        for algo in self.algos:
            if algo not in VALID_ALGOS:
                raise ValueError(f"unknown algorithm {algo!r}; expected one of {VALID_ALGOS}")
        if min(self.d1, self.d2, self.n_arms, self.T, self.n_envs, self.n_trials) < 1:
            raise ValueError("dimensions, horizon and trial counts must be positive")


def experiment_spec(
    setting: int | str = "custom",
    *,
    algos=("hylinucb", "linucb", "dislinucb"),
    n_envs: int = 5,
    n_trials: int = 5,
    scale: float = 1.0,
    k_grid=(),
    base_seed: int = 0,
    noise_std: float = 0.1,
    S: float = 1.0,
    delta: float = 0.1,
    diagnostics_every: int = 0,
    threads: int = 1,
    d1: int | None = None,
    d2: int | None = None,
    n_arms: int | None = None,
    T: int | None = None,
) -> ExperimentSpec:
    """Build a spec from a named setting plus overrides.

    ``scale`` shrinks the horizon and trial counts uniformly (floored at 1)
    so the full-size settings can be exercised at desk scale.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    shape = dict(SETTING_SHAPES.get(setting, {}))  # type: ignore[arg-type]
    if setting == 3 and not k_grid:
        k_grid = DEFAULT_K_GRID
    resolved = {
        "d1": d1 if d1 is not None else shape.get("d1"),
        "d2": d2 if d2 is not None else shape.get("d2"),
        "n_arms": n_arms if n_arms is not None else shape.get("n_arms"),
        "T": T if T is not None else shape.get("T"),
    }
    if resolved["n_arms"] is None and k_grid:
        resolved["n_arms"] = int(k_grid[0])
    for name, value in resolved.items():
        if value is None:
            raise ValueError(f"{name} must be given for setting {setting!r}")
    return ExperimentSpec(
        setting=setting,
        algos=tuple(algos),
        d1=int(resolved["d1"]),
        d2=int(resolved["d2"]),
        n_arms=int(resolved["n_arms"]),
        T=max(1, int(round(resolved["T"] * scale))),
        n_envs=max(1, int(round(n_envs * scale))) if scale < 1 else n_envs,
        n_trials=max(1, int(round(n_trials * scale))) if scale < 1 else n_trials,
        noise_std=noise_std,
        S=S,
        delta=delta,
        base_seed=base_seed,
        diagnostics_every=diagnostics_every,
        k_grid=tuple(int(k) for k in k_grid),
        threads=threads,
    )


@dataclass
class RegretTrace:
    """Per-round cumulative regret and chosen arms of one trial."""

    algo: str
    env_id: int
    trial_id: int
    seed: int
    cum_regret: np.ndarray
    chosen: np.ndarray

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


def run_trial(
    algo: str,
    env: Environment,
    trial_index: int,
    *,
    delta: float = 0.1,
    diagnostics_every: int = 0,
    sandwich_every: int | None = None,
    lam: float | None = None,
    gamma: float | None = None,
) -> tuple[RegretTrace, DiagnosticsTrace | None]:
    """Run one policy through one environment for a full horizon.

    Reward noise comes from the (env_seed, trial) stream, drawn once per
    round independently of the chosen arm; contexts are shared by all trials
    of the environment.  Diagnostics, when enabled, snapshot the design
    spectra every ``diagnostics_every`` rounds.  The sandwich spectrum is an
    O((d1 + d2*K)^3) eigendecomposition, so it follows its own stride:
    ``sandwich_every=None`` samples it with the other diagnostics when the
    embedded dimension is at most 64 and skips it otherwise; 0 disables it.
    """
    params = env.params
    T = env.contexts.T
    if algo == ORACLE:
        policy = OraclePolicy(params)
    else:
        config = PolicyConfig.create(
            algo,
            d1=params.d1,
            d2=params.d2,
            n_arms=params.n_arms,
            S=params.S,
            T=T,
            delta=delta,
            lam=lam,
            gamma=gamma,
        )
        policy = make_policy(config)
    if env.noise_std > 0:
        noise = env.noise_std * stream(env.env_seed, trial_index, 0, "noise").standard_normal(T)
    else:
        noise = np.zeros(T)
    cum = np.empty(T)
    chosen = np.empty(T, dtype=np.int64)
    total = 0.0
    tracker = None
    diag = None
    if diagnostics_every > 0:
        tracker = PulledFeatureTracker(params.d1, params.d2, params.n_arms)
        diag = DiagnosticsTrace(
            algo, env.env_id, trial_index, params.n_arms, params.d1, params.d2
        )
        if sandwich_every is None:
            dim = params.d1 + params.d2 * params.n_arms
            sandwich_every = diagnostics_every if dim <= 64 else 0
    for t in range(T):
        ctx = env.contexts.round(t)
        arm = policy.select_arm(ctx)
        means = mean_rewards(params, ctx)
        x, z = ctx.arm(arm)
        policy.update(arm, x, z, float(means[arm] + noise[t]))
        total += max(0.0, float(np.max(means) - means[arm]))
        cum[t] = total
        chosen[t] = arm
        if tracker is not None:
            tracker.record(SparseHybridVector(arm, x, z))
            if (t + 1) % diagnostics_every == 0:
                with_sandwich = sandwich_every > 0 and (t + 1) % sandwich_every == 0
                diag.samples.append(
                    sample_diagnostics(tracker, policy, params, t + 1, with_sandwich)
                )
    trace = RegretTrace(algo, env.env_id, trial_index, env.env_seed, cum, chosen)
    return trace, diag


def _run_synthetic_job(args) -> tuple[RegretTrace, DiagnosticsTrace | None]:
    cfg, env_id, algo, trial_index, delta, diagnostics_every = args
    env = synthetic_environment(cfg, env_id)
    return run_trial(
        algo, env, trial_index, delta=delta, diagnostics_every=diagnostics_every
    )


@dataclass
class AggregateCurve:
    """Across-trial mean and standard deviation of cumulative regret."""

    algo: str
    mean: np.ndarray
    std: np.ndarray
    n_trials: int


def aggregate_traces(traces: list[RegretTrace]) -> dict[str, AggregateCurve]:
    """One-pass mean/std per (algo, round) over trials, order-independent.

    Traces are sorted by (algo, env, trial) before the streaming pass, so the
    result does not depend on completion order.
    """
    by_algo: dict[str, list[RegretTrace]] = {}
    for tr in traces:
        by_algo.setdefault(tr.algo, []).append(tr)
    out: dict[str, AggregateCurve] = {}
    for algo, group in sorted(by_algo.items()):
        group = sorted(group, key=lambda tr: (tr.env_id, tr.trial_id))
        n = 0
        mean = np.zeros_like(group[0].cum_regret)
        m2 = np.zeros_like(mean)
        for tr in group:
            n += 1
            delta = tr.cum_regret - mean
            mean += delta / n
            m2 += delta * (tr.cum_regret - mean)
        std = np.sqrt(m2 / n) if n > 0 else m2
        out[algo] = AggregateCurve(algo, mean, std, n)
    return out


@dataclass
class SummaryRow:
    algo: str
    n_arms: int
    d1: int
    d2: int
    T: int
    mean_final_regret: float
    std_final_regret: float
    n_trials: int


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    traces: list[RegretTrace]
    diagnostics: list[DiagnosticsTrace]
    curves: dict[str, AggregateCurve]
    summary: list[SummaryRow] = field(default_factory=list)


def _summary_rows(spec: ExperimentSpec, traces: list[RegretTrace]) -> list[SummaryRow]:
    rows = []
    finals: dict[str, list[float]] = {}
    for tr in sorted(traces, key=lambda tr: (tr.algo, tr.env_id, tr.trial_id)):
        finals.setdefault(tr.algo, []).append(tr.final_regret)
    for algo in sorted(finals):
        vals = np.array(finals[algo])
        rows.append(
            SummaryRow(
                algo,
                spec.n_arms,
                spec.d1,
                spec.d2,
                spec.T,
                float(np.mean(vals)),
                float(np.std(vals)),
                len(vals),
            )
        )
    return rows


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every (environment, algorithm, trial) combination of a spec.

    Setting 3 sweeps the K grid, rerunning the spec once per arm count; the
    summary then has one row per (algorithm, K).
    """
    if spec.setting == 3 and spec.k_grid:
        traces: list[RegretTrace] = []
        diagnostics: list[DiagnosticsTrace] = []
        summary: list[SummaryRow] = []
        for k in spec.k_grid:
            sub = replace(spec, setting="custom", n_arms=int(k), k_grid=())
            result = run_experiment(sub)
            traces.extend(result.traces)
            diagnostics.extend(result.diagnostics)
            summary.extend(result.summary)
        curves = aggregate_traces(traces)
        return ExperimentResult(spec, traces, diagnostics, curves, summary)

    jobs = []
    for env_idx in range(spec.n_envs):
        cfg = SyntheticEnvConfig(
            d1=spec.d1,
            d2=spec.d2,
            n_arms=spec.n_arms,
            T=spec.T,
            noise_std=spec.noise_std,
            S=spec.S,
            env_seed=derive_seed(spec.base_seed, env_idx),
            n_trials=spec.n_trials,
        )
        for algo in spec.algos:
            for trial in range(spec.n_trials):
                jobs.append((cfg, env_idx, algo, trial, spec.delta, spec.diagnostics_every))

    results: list[tuple[RegretTrace, DiagnosticsTrace | None]]
    if spec.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(_run_synthetic_job, jobs, chunksize=1))
    else:
        results = [_run_synthetic_job(job) for job in jobs]

    traces = [trace for trace, _ in results]
    diagnostics = [diag for _, diag in results if diag is not None]
    traces.sort(key=lambda tr: (tr.algo, tr.env_id, tr.trial_id))
    diagnostics.sort(key=lambda d: (d.algo, d.env_id, d.trial_id))
    curves = aggregate_traces(traces)
    return ExperimentResult(spec, traces, diagnostics, curves, _summary_rows(spec, traces))


def run_environment_trials(
    algos,
    env: Environment,
    n_trials: int,
    *,
    delta: float = 0.1,
    diagnostics_every: int = 0,
) -> list[RegretTrace]:
    """Run several trials of several algorithms on one prebuilt environment."""
    traces = []
    for algo in algos:
        for trial in range(n_trials):
            trace, _ = run_trial(
                algo, env, trial, delta=delta, diagnostics_every=diagnostics_every
            )
            traces.append(trace)
    traces.sort(key=lambda tr: (tr.algo, tr.env_id, tr.trial_id))
    return traces


def _fmt(x) -> str:
    """Serialize a float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


def write_regret_csv(path, traces: list[RegretTrace], stride: int = 1) -> None:
    """Write per-round cumulative regret, thinned by ``stride`` if > 1.

    The final round is always included so summaries can be rebuilt from the
    file.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("algo,env_id,trial_id,round,cum_regret,chosen_arm\n")
        for tr in sorted(traces, key=lambda tr: (tr.algo, tr.env_id, tr.trial_id)):
            T = len(tr.cum_regret)
            rounds = list(range(stride - 1, T, stride))
            if rounds and rounds[-1] != T - 1:
                rounds.append(T - 1)
            for t in rounds:
                fh.write(
                    f"{tr.algo},{tr.env_id},{tr.trial_id},{t + 1},"
                    f"{_fmt(tr.cum_regret[t])},{int(tr.chosen[t])}\n"
                )


def write_summary_csv(path, rows: list[SummaryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("algo,K,d1,d2,T,mean_final_regret,std_final_regret,n_trials\n")
        for row in sorted(rows, key=lambda r: (r.algo, r.n_arms)):
            fh.write(
                f"{row.algo},{row.n_arms},{row.d1},{row.d2},{row.T},"
                f"{_fmt(row.mean_final_regret)},{_fmt(row.std_final_regret)},{row.n_trials}\n"
            )


def write_diagnostics_csv(path, diagnostics: list[DiagnosticsTrace]) -> None:
    header = (
        "algo,env_id,trial_id,round,lambda_min_V,min_over_arms_lambda_min_W,"
        "max_over_arms_sigma_max_B_over_sqrt_tau,sandwich_min,sandwich_max,"
        "conf_residual,conf_gamma\n"
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header)
        for diag in sorted(diagnostics, key=lambda d: (d.algo, d.env_id, d.trial_id)):
            for s in diag.samples:
                min_w = float(np.min(s.lambda_min_W))
                pulled = s.tau > 0
                if np.any(pulled):
                    ratio = float(
                        np.max(s.sigma_max_B[pulled] / np.sqrt(s.tau[pulled]))
                    )
                else:
                    ratio = math.nan
                fh.write(
                    f"{diag.algo},{diag.env_id},{diag.trial_id},{s.round_index},"
                    f"{_fmt(s.lambda_min_V)},{_fmt(min_w)},{_fmt(ratio)},"
                    f"{_fmt(s.sandwich_min)},{_fmt(s.sandwich_max)},"
                    f"{_fmt(s.conf_residual)},{_fmt(s.conf_gamma)}\n"
                )
