"""Command-line experiment runner.

    mcbo run   --config exp.toml [--task T --algo A --beta B --rounds N --seeds K ...]
    mcbo sweep --config exp.toml [--betas 0.05 0.5 5]
    mcbo tasks

A config file holds either one run (``RunConfig`` fields at top level) or
``runs = [...]`` plus optional ``seeds``, ``master_seed``, ``output_dir`` and
``emit``.  Command-line flags override every run in the file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import metrics
from .engine import RunConfig, RunResult, build_task, execute
from .scm import dumps_intervention
from .tasks import TASK_NAMES

log = logging.getLogger("mcbo")

CSV_COLUMNS = (
    "round",
    "seed",
    "intervention",
    "expected_reward",
    "observed_reward",
    "cum_regret",
    "avg_reward",
    "avg_reward_sum",
    "best_reward",
    "acq_value",
    "wall_ms",
)
AGG_METRICS = ("cum_regret", "avg_reward", "avg_reward_sum", "best_reward")
DEFAULT_BETAS = (0.05, 0.5, 5.0)


def fmt(x: float) -> str:
    return "%.17g" % x


@dataclass
class ExperimentSpec:
    runs: list[RunConfig]
    seeds: list[int]
    output_dir: Path
    emit: str = "csv"
    jobs: int = 1
    timing: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.emit not in ("csv", "json", "both"):
            raise ValueError("emit must be csv, json or both")
        self.seeds = list(dict.fromkeys(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("at least one seed is required")


# -- config loading -------------------------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def resolve_seeds(seeds, master_seed: int = 0) -> list[int]:
    """An explicit list is kept (de-duplicated); a count ``n`` expands to ``master_seed + k``."""
    if isinstance(seeds, int):
        return [master_seed + k for k in range(seeds)]
    return list(dict.fromkeys(int(s) for s in seeds))


_OVERRIDES = ("task", "algo", "beta", "rounds")


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    raw = load_config_file(args.config) if args.config else {}
    run_dicts = raw.get("runs")
    if run_dicts is None:
        top = {k: v for k, v in raw.items() if k not in ("seeds", "master_seed", "output_dir", "emit", "jobs")}
        run_dicts = [top]
    runs = []
    for rd in run_dicts:
        rd = dict(rd)
        for key in _OVERRIDES:
            val = getattr(args, key, None)
            if val is not None:
                rd[key] = val
        if getattr(args, "noisy", False):
            rd["noisy"] = True
        runs.append(RunConfig.from_dict(rd))
    master = args.master_seed if args.master_seed is not None else raw.get("master_seed", 0)
    seeds = args.seeds if args.seeds is not None else raw.get("seeds", 1)
    out = Path(args.out or raw.get("output_dir", "mcbo_out"))
    return ExperimentSpec(
        runs=runs,
        seeds=resolve_seeds(seeds, master),
        output_dir=out,
        emit=args.emit or raw.get("emit", "csv"),
        jobs=args.jobs or raw.get("jobs", 1),
        timing=args.timing,
    )


# -- hashing ------------------------------------------------------------------------------------


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig, seeds: list[int]) -> str:
    d = cfg.to_dict()
    d.pop("seed")
    return hashlib.sha256(_canonical({"config": d, "seeds": seeds}).encode()).hexdigest()


def run_label(idx: int, cfg: RunConfig) -> str:
    task = Path(cfg.task).stem if cfg.task.endswith(".json") else cfg.task
    noisy = "_noisy" if cfg.noisy else ""
    return f"{idx:02d}_{task}{noisy}_{cfg.algo}_beta{cfg.beta:g}"


# -- writers ------------------------------------------------------------------------------------


def run_rows(result: RunResult, seed: int, timing: bool = False) -> list[list[str]]:
    recs = result.records
    cr = metrics.cumulative_regret(recs, result.optimum).values
    ar = metrics.average_reward(recs).values
    asum = metrics.average_reward_sum(recs).values
    br = metrics.best_reward(recs).values
    rows = []
    for k, r in enumerate(recs):
        rows.append(
            [
                str(r.t),
                str(seed),
                dumps_intervention(r.intervention),
                fmt(r.expected_reward),
                fmt(r.sample.reward),
                fmt(cr[k]),
                fmt(ar[k]),
                fmt(asum[k]),
                fmt(br[k]),
                fmt(r.acq_value),
                str(r.wall_ms if timing else 0),
            ]
        )
    return rows


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def aggregate_rows(results: list[RunResult]) -> tuple[list[str], list[list[str]]]:
    curves = {
        "cum_regret": [metrics.cumulative_regret(r.records, r.optimum) for r in results],
        "avg_reward": [metrics.average_reward(r.records) for r in results],
        "avg_reward_sum": [metrics.average_reward_sum(r.records) for r in results],
        "best_reward": [metrics.best_reward(r.records) for r in results],
    }
    header = ["round", "n_seeds"]
    cols = []
    for name in AGG_METRICS:
        mean, se = metrics.aggregate_seeds(curves[name])
        header += [f"{name}_mean", f"{name}_stderr"]
        cols += [mean.values, se.values]
    T = len(results[0].records)
    rows = [[str(t + 1), str(len(results))] + [fmt(c[t]) for c in cols] for t in range(T)]
    return header, rows


def run_json(result: RunResult, seed: int, timing: bool) -> str:
    return json.dumps(
        {
            "seed": seed,
            "optimum": result.optimum,
            "init_count": result.init_count,
            "records": [
                {
                    "round": r.t,
                    "intervention": r.intervention.to_json(),
                    "expected_reward": r.expected_reward,
                    "observed_reward": r.sample.reward,
                    "observations": [np.asarray(o).tolist() for o in r.sample.obs],
                    "acq_value": r.acq_value,
                    "wall_ms": r.wall_ms if timing else 0,
                }
                for r in result.records
            ],
        },
        indent=1,
    )


# -- execution ----------------------------------------------------------------------------------


def _execute_one(cfg: RunConfig):
    try:
        return execute(cfg), None
    except Exception as exc:  # reported in the manifest
        log.exception("run failed: %s seed %s", cfg.task, cfg.seed)
        return None, f"{type(exc).__name__}: {exc}"


def run_experiment(spec: ExperimentSpec) -> int:
    """Run every (config, seed) pair, write CSV/JSON outputs and a manifest. Returns the exit code."""
    t0 = time.perf_counter()
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, replace(cfg, seed=s)) for i, cfg in enumerate(spec.runs) for s in spec.seeds]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            outcomes = list(pool.map(_execute_one, [c for _, c in jobs]))
    else:
        outcomes = [_execute_one(c) for _, c in jobs]

    manifest_runs = []
    ok = True
    for i, cfg in enumerate(spec.runs):
        label = run_label(i, cfg)
        rdir = out / label
        rdir.mkdir(exist_ok=True)
        status, results = {}, []
        for (j, c), (res, err) in zip(jobs, outcomes):
            if j != i:
                continue
            if err is not None:
                status[str(c.seed)] = f"failed: {err}"
                ok = False
                continue
            status[str(c.seed)] = "ok"
            results.append(res)
            if spec.emit in ("csv", "both"):
                (rdir / f"seed_{c.seed}.csv").write_text(
                    csv_text(CSV_COLUMNS, run_rows(res, c.seed, spec.timing))
                )
            if spec.emit in ("json", "both"):
                (rdir / f"seed_{c.seed}.json").write_text(run_json(res, c.seed, spec.timing))
        if results:
            header, rows = aggregate_rows(results)
            (rdir / "aggregate.csv").write_text(csv_text(header, rows))
        try:
            task_hash = build_task(cfg).content_hash()
        except Exception as exc:
            task_hash = f"unavailable: {exc}"
        manifest_runs.append(
            {
                "label": label,
                "config": cfg.to_dict() | {"seed": None},
                "seeds": spec.seeds,
                "config_hash": config_hash(cfg, spec.seeds),
                "task_hash": task_hash,
                "optimum": results[0].optimum if results else None,
                "status": status,
            }
        )
    manifest = {
        "status": "complete" if ok else "partial",
        "runs": manifest_runs,
        "wall_clock_s": round(time.perf_counter() - t0, 3),
        "argv": sys.argv[1:],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0 if ok else 1


# -- beta sweep -----------------------------------------------------------------------------------


def _final(out: Path, label: str, column: str):
    path = out / label / "aggregate.csv"
    if not path.exists():
        return None
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    return float(rows[-1][column]) if rows else None


def select_beta(table: dict[tuple[str, str], dict[float, float]]) -> dict[tuple[str, str], float]:
    """Leave-one-task-out choice of beta for each (algo, held-out task).

    ``table[(algo, task)][beta]`` is a score where larger is better.  For each
    held-out task the betas are ranked on every other task of the same algo
    (rank 1 = best) and the lowest mean rank wins; ties go to the smaller beta.
    With a single task there is nothing to hold out against, so its own ranking is used.
    """
    picks = {}
    algos = {a for a, _ in table}
    for algo in algos:
        tasks = sorted(t for a, t in table if a == algo)
        for held in tasks:
            others = [t for t in tasks if t != held] or [held]
            betas = sorted(set.intersection(*(set(table[(algo, t)]) for t in others)))
            ranks = {b: 0.0 for b in betas}
            for t in others:
                scores = table[(algo, t)]
                order = sorted(betas, key=lambda b: (-scores[b], b))
                for r, b in enumerate(order, start=1):
                    ranks[b] += r / len(others)
            picks[(algo, held)] = min(betas, key=lambda b: (ranks[b], b))
    return picks


def sweep_beta(spec: ExperimentSpec, betas=DEFAULT_BETAS) -> int:
    """Run every config at every beta and summarize final metrics per (task, algo, beta)."""
    if not betas:
        raise ValueError("betas must be nonempty")
    runs = [replace(cfg, beta=float(b)) for cfg in spec.runs for b in betas]
    code = run_experiment(replace(spec, runs=runs))
    out = spec.output_dir
    summary = []
    tables = {m: {} for m in ("avg_reward", "best_reward")}
    for i, cfg in enumerate(runs):
        label = run_label(i, cfg)
        row = [cfg.task, cfg.algo, fmt(cfg.beta)]
        for m in ("avg_reward", "best_reward", "cum_regret"):
            mean = _final(out, label, f"{m}_mean")
            se = _final(out, label, f"{m}_stderr")
            row += ["" if mean is None else fmt(mean), "" if se is None else fmt(se)]
            if m in tables and mean is not None:
                tables[m].setdefault((cfg.algo, cfg.task), {})[cfg.beta] = mean
        summary.append(row)
    header = ["task", "algo", "beta"] + [f"final_{m}_{s}" for m in ("avg_reward", "best_reward", "cum_regret") for s in ("mean", "stderr")]
    (out / "beta_summary.csv").write_text(csv_text(header, summary))
    sel_rows = []
    for m, table in tables.items():
        for (algo, task), b in sorted(select_beta(table).items()):
            sel_rows.append([m, algo, task, fmt(b)])
    (out / "beta_selection.csv").write_text(csv_text(["metric", "algo", "held_out_task", "beta"], sel_rows))
    return code


# -- argument parsing -------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or TOML experiment file")
    p.add_argument("--task")
    p.add_argument("--algo", choices=("mcbo", "mcbo_hard", "ucb_baseline"))
    p.add_argument("--beta", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seeds", type=int, help="number of seeds, counted up from --master-seed")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--out", help="output directory")
    p.add_argument("--emit", choices=("csv", "json", "both"))
    p.add_argument("--jobs", type=int, help="parallel seed workers")
    p.add_argument("--timing", action="store_true", help="write measured wall_ms instead of 0")
    p.add_argument("-v", "--verbose", action="store_true")


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcbo", description="Model-based causal Bayesian optimization experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run configs over seeds"))
    sw = sub.add_parser("sweep", help="run configs over a beta grid and select beta")
    _common(sw)
    sw.add_argument("--betas", type=float, nargs="+", default=list(DEFAULT_BETAS))
    sub.add_parser("tasks", help="list catalog tasks")
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    if args.command == "tasks":
        for name in TASK_NAMES + ("rkhs_chain",):
            print(name)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = build_spec(args)
    except (OSError, ValueError, KeyError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "sweep":
        return sweep_beta(spec, args.betas)
    return run_experiment(spec)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
