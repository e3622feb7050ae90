"""Experiment protocol: cold start, repetitions, best-feasible traces and aggregation.

Per repetition ``r`` the seed is ``base_seed + r``; all randomness of that
repetition comes from :func:`lcbo.algorithm.spawn_streams` of that seed
(cold start locations and their noise, LCBO noise, acquisition restarts or
random-search samples, synthetic problem generation).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .algorithm import LCBOConfig, run, spawn_streams
from .benchmarks import PROBLEMS, ProblemDef, get_problem, noisy_observe

logger = logging.getLogger(__name__)

METHODS = ("lcbo", "random_search")
JUDGES = ("truth", "noisy")
TRACE_COLUMNS = ("eval", "seed", "best_feasible", "rs_hat", "rf_hat")
AGGREGATE_COLUMNS = ("eval", "median", "q25", "q75")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "toy_circle"
    dim: int | None = None
    method: str = "lcbo"
    budget: int = 1000
    repetitions: int = 10
    base_seed: int = 0
    output_dir: str = "results"
    noise_sd: float | None = None
    judge: str = "truth"
    start_judge: str = "truth"
    plots: bool = False
    jobs: int = 1
    lcbo: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.judge not in JUDGES or self.start_judge not in JUDGES:
            raise ConfigError(f"judge and start_judge must be one of {', '.join(JUDGES)}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.dim is not None and self.dim < 1:
            raise ConfigError("dim must be positive")
        d = problem_dim(self.problem, self.dim)
        if self.budget < d + 1:
            raise ConfigError(f"budget must cover the {d}-point cold start plus one step (>= {d + 1})")
        try:
            self.lcbo_config(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid LCBO settings: {exc}") from exc
        return self

    def lcbo_config(self, d: int, **extra) -> LCBOConfig:
        settings = dict(benchmark_defaults(self.problem, d))
        settings.update(self.lcbo)
        settings.update(extra)
        return LCBOConfig(**settings)


@dataclass(frozen=True)
class TraceRow:
    eval: int
    seed: int
    best_feasible: float
    rs_hat: float
    rf_hat: float


def problem_dim(name: str, dim: int | None) -> int:
    fixed = {"toy_circle": 2, "truss": 25, "beam": 50}
    if name == "synthetic":
        return 25 if dim is None else dim
    return fixed[name]


def benchmark_defaults(name: str, d: int) -> dict:
    """Per-benchmark LCBO settings that differ from the global defaults."""
    if name == "beam":
        return {"fixed_batch": (1, 1), "step_scale": 0.5}
    if name == "synthetic" and d > 25:
        return {"step_scale": 0.5}
    return {}


# ----------------------------------------------------------------------
# protocol pieces
# ----------------------------------------------------------------------


def total_violation(problem: ProblemDef, c) -> np.ndarray:
    return np.linalg.norm(problem.violation(np.atleast_2d(c)), axis=1)


def select_start(problem: ProblemDef, values) -> int:
    """Index of the best feasible row, else of the least violating one."""
    values = np.atleast_2d(values)
    feasible = problem.is_feasible(values)
    if np.any(feasible):
        idx = np.flatnonzero(feasible)
        return int(idx[np.argmin(values[idx, 0])])
    return int(np.argmin(total_violation(problem, values[:, 1:])))


def cold_start(problem: ProblemDef, seed, judge: str = "truth"):
    """``d`` uniform points with noisy observations and the starting candidate.

    Returns ``(X0, Y0, x1, truth)`` in original units.
    """
    rng = spawn_streams(seed)["cold_start"]
    X0 = problem.domain.sample(rng, problem.dim)
    Y0 = noisy_observe(problem, X0, rng)
    truth = problem.values(X0)
    x1 = X0[select_start(problem, truth if judge == "truth" else Y0)]
    return X0, Y0, x1, truth


def _best_feasible_curve(problem: ProblemDef, truth, observed, judge: str) -> np.ndarray:
    feasible = problem.is_feasible(truth if judge == "truth" else observed)
    objective = np.where(feasible, truth[:, 0], np.inf)
    return np.minimum.accumulate(objective) if objective.size else objective


def random_search_baseline(problem: ProblemDef, budget: int, seed, judge: str = "truth") -> list[TraceRow]:
    """Uniform sampling; the first ``d`` points are the shared cold start."""
    if budget <= 0:
        return []
    d = problem.dim
    X0, Y0, _, truth0 = cold_start(problem, seed)
    n0 = min(d, budget)
    rng = spawn_streams(seed)["acquisition"]
    X = problem.domain.sample(rng, budget - n0)
    Y = noisy_observe(problem, X, rng)
    truth = np.vstack([truth0[:n0], problem.values(X)])
    observed = np.vstack([Y0[:n0], Y])
    curve = _best_feasible_curve(problem, truth, observed, judge)
    return [TraceRow(i + 1, int(seed), float(v), math.nan, math.nan) for i, v in enumerate(curve)]


def lcbo_trace(problem: ProblemDef, config: LCBOConfig, budget: int, seed, judge="truth", start_judge="truth"):
    """Run LCBO under the evaluation budget; returns ``(rows, records, evaluations)``.

    Evaluation indices past the point where the next batch no longer fits
    repeat the last row; no oracle is called for them.
    """
    d, p = problem.dim, problem.num_outputs
    X0, Y0, x1, truth0 = cold_start(problem, seed, start_judge)
    cfg = dataclasses.replace(config, max_oracle_calls=(budget - d) * p)
    records = run(problem, cfg, seed, X0, Y0, x1)

    truths = [truth0] + [problem.values(r.Z) for r in records]
    observed = [Y0] + [r.observations for r in records]
    curve = _best_feasible_curve(problem, np.vstack(truths), np.vstack(observed), judge)
    rs = [math.nan] * d
    rf = [math.nan] * d
    for r in records:
        rs += [r.r_s_hat] * r.batch_size
        rf += [r.r_f_hat] * r.batch_size
    evaluations = curve.size
    rows = [TraceRow(i + 1, int(seed), float(curve[i]), rs[i], rf[i]) for i in range(evaluations)]
    while rows and len(rows) < budget:
        last = rows[-1]
        rows.append(dataclasses.replace(last, eval=last.eval + 1))
    return rows, records, evaluations


def run_repetition(config: ExperimentConfig, rep: int):
    seed = config.base_seed + rep
    d = problem_dim(config.problem, config.dim)
    problem_seed = int(spawn_streams(seed)["problem"].integers(2**31 - 1))
    problem = get_problem(config.problem, dim=d, seed=problem_seed, noise_sd=config.noise_sd)
    summary = {"seed": seed, "problem": problem.name, "method": config.method, "num_outputs": problem.num_outputs}
    if config.method == "random_search":
        rows = random_search_baseline(problem, config.budget, seed, config.judge)
        summary.update(evaluations=len(rows), oracle_calls=len(rows) * problem.num_outputs, iterations=0)
    else:
        rows, records, evaluations = lcbo_trace(
            problem, config.lcbo_config(d), config.budget, seed, config.judge, config.start_judge
        )
        calls = d * problem.num_outputs + (records[-1].oracle_calls if records else 0)
        summary.update(evaluations=evaluations, oracle_calls=calls, iterations=len(records))
        if records:
            last = records[-1]
            summary.update(
                final_x=last.x_next.tolist(),
                final_rs_hat=last.r_s_hat,
                final_rf_hat=last.r_f_hat,
                final_rs_true=None if math.isnan(last.r_s_true) else last.r_s_true,
                final_rf_true=None if math.isnan(last.r_f_true) else last.r_f_true,
            )
    summary["best_feasible"] = rows[-1].best_feasible if rows else math.inf
    return rows, summary


# ----------------------------------------------------------------------
# I/O and aggregation
# ----------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_trace(path: Path, rows: Iterable[TraceRow]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in TRACE_COLUMNS])


def read_trace(path: Path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            TraceRow(int(r["eval"]), int(r["seed"]), float(r["best_feasible"]), float(r["rs_hat"]), float(r["rf_hat"]))
            for r in reader
        ]


def extended_quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile that treats +inf as an ordinary (largest) value."""
    v = np.sort(np.asarray(values, dtype=float))
    pos = q * (v.size - 1)
    lo, hi = math.floor(pos), math.ceil(pos)
    frac = pos - lo
    if frac == 0.0 or v[lo] == v[hi]:
        return float(v[lo])
    return float(v[lo] + frac * (v[hi] - v[lo]))


def aggregate_traces(traces: Sequence[Sequence[TraceRow]]) -> list[tuple[int, float, float, float]]:
    """Per-evaluation median and quartiles of the best-feasible curves across seeds."""
    length = min(len(t) for t in traces) if traces else 0
    out = []
    for i in range(length):
        vals = [t[i].best_feasible for t in traces]
        out.append((i + 1, extended_quantile(vals, 0.5), extended_quantile(vals, 0.25), extended_quantile(vals, 0.75)))
    return out


def write_aggregate(path: Path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for e, med, q25, q75 in rows:
            writer.writerow([str(e), _fmt(med), _fmt(q25), _fmt(q75)])


def aggregate_directory(directory: Path, out: Path | None = None) -> Path:
    directory = Path(directory)
    paths = sorted(directory.glob("trace_seed*.csv"))
    if not paths:
        raise FileNotFoundError(f"no trace_seed*.csv files in {directory}")
    out = directory / "aggregate.csv" if out is None else Path(out)
    write_aggregate(out, aggregate_traces([read_trace(p) for p in paths]))
    return out


def plot_aggregate(aggregate_csv: Path, out: Path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.genfromtxt(aggregate_csv, delimiter=",", names=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    med = np.where(np.isfinite(data["median"]), data["median"], np.nan)
    ax.plot(data["eval"], med, color="tab:red", label="median")
    lo = np.where(np.isfinite(data["q25"]), data["q25"], np.nan)
    hi = np.where(np.isfinite(data["q75"]), data["q75"], np.nan)
    ax.fill_between(data["eval"], lo, hi, color="tab:red", alpha=0.25, label="IQR")
    ax.set_xlabel("evaluations")
    ax.set_ylabel("best feasible objective")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def _run_rep(args):
    return run_repetition(*args)


def run_experiment(config: ExperimentConfig) -> dict[str, Path]:
    """Run every repetition and write traces, the aggregate and a JSON summary."""
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config, rep) for rep in range(config.repetitions)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_rep, jobs))
    else:
        results = [_run_rep(j) for j in jobs]

    files: dict[str, Path] = {}
    traces = []
    summaries = []
    for rows, summary in results:
        path = out / f"trace_seed{summary['seed']}.csv"
        write_trace(path, rows)
        files[path.stem] = path
        traces.append(rows)
        summaries.append(summary)
    files["aggregate"] = out / "aggregate.csv"
    write_aggregate(files["aggregate"], aggregate_traces(traces))
    files["summary"] = out / "summary.json"
    files["summary"].write_text(json.dumps(summaries, indent=2, default=_json_default) + "\n")
    if config.plots:
        files["plot"] = plot_aggregate(
            files["aggregate"], out / "convergence.svg", f"{config.problem} / {config.method}"
        )
    return files


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
