"""Command-line front end.

Subcommands: ``run`` (HESGA trials), ``baseline`` (random, grid or plain GA
trials), ``oracle`` (exhaustive table), ``report`` (statistics over summary
files) and ``cost`` (predicted vs measured training epochs).

Exit codes: 0 success, 1 runtime failure or cost mismatch, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .baselines import grid_cardinality, grid_search, random_search, traditional_ga, traditional_ga_cost
from .core import ConfigError, HesgaConfig, cost_in_epoch_units, exact_epoch_units, run
from .objectives import exhaustive_oracle, objective_from_config
from .seeding import derive_seed
from .space import DEFAULT_ENUMERATION_LIMIT, EnumerationTooLarge, SearchSpace
from .stats import TrialSet, comparison_report

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

HISTORY_HEADER = ["gen", "best_rmse", "ev_fast", "ev_full", "epoch_units"]
SUMMARY_HEADER = ["label", "trial", "seed", "genome", "best_rmse", "ev_fast", "ev_full", "epoch_units"]

HESGA_FIELDS = {f.name for f in fields(HesgaConfig)} - {"master_seed"}
ALGORITHM_FIELDS = {
    "hesga": HESGA_FIELDS,
    "traditional_ga": HESGA_FIELDS - {"p_f", "r_c"},
    "random": {"n_e", "budget", "epoch_budget"},
    "grid": {"n_e", "stride_bits"},
}
BASELINES = ("random", "grid", "traditional_ga")
TOP_LEVEL = {"label", "search_space", "objective", "algorithm", "trials", "master_seed", "output_dir", "oracle"}


class ConfigValidationError(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


@dataclass
class RunConfig:
    raw: dict
    label: str
    space: SearchSpace
    objective: Any
    algorithm: str
    params: dict
    trials: int
    master_seed: int
    output_dir: Path

    def hesga_config(self, seed: int) -> HesgaConfig:
        return HesgaConfig(master_seed=seed, **self.params)

    def n_e(self) -> int:
        return int(self.params["n_e"])


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def load_config(path: str | Path, out: str | Path | None = None) -> RunConfig:
    """Read and validate a JSON run configuration, collecting every problem found."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigValidationError([("<file>", str(exc))]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([("<file>", f"invalid JSON: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise ConfigValidationError([("<root>", "configuration must be a JSON object")])
    problems: list[tuple[str, str]] = []
    for key in sorted(set(raw) - TOP_LEVEL):
        problems.append((key, "unknown field"))

    space = None
    dims = raw.get("search_space")
    if not isinstance(dims, list) or not dims:
        problems.append(("search_space", "must be a non-empty list of dimensions"))
    else:
        for i, d in enumerate(dims):
            if not isinstance(d, dict):
                problems.append((f"search_space[{i}]", "must be an object"))
                continue
            extra = set(d) - {"name", "bits", "step", "kind"}
            if extra:
                problems.append((f"search_space[{i}]", f"unknown fields {sorted(extra)}"))
            if not _is_int(d.get("bits")):
                problems.append((f"search_space[{i}].bits", "must be an integer"))
            if not isinstance(d.get("step"), (int, float)) or isinstance(d.get("step"), bool):
                problems.append((f"search_space[{i}].step", "must be a number"))
        if not problems:
            try:
                space = SearchSpace.from_dicts(dims)
            except (TypeError, ValueError) as exc:
                problems.append(("search_space", str(exc)))

    algo = raw.get("algorithm")
    name, params = None, {}
    if not isinstance(algo, dict) or "name" not in algo:
        problems.append(("algorithm", "must be an object with a 'name'"))
    else:
        name = algo["name"]
        params = {k: v for k, v in algo.items() if k != "name"}
        if name not in ALGORITHM_FIELDS:
            problems.append(("algorithm.name", f"unknown algorithm {name!r}"))
        else:
            for key in sorted(set(params) - ALGORITHM_FIELDS[name]):
                problems.append((f"algorithm.{key}", "unknown field"))
            if not _is_int(params.get("n_e")) or params["n_e"] < 1:
                problems.append(("algorithm.n_e", "must be a positive integer"))

    trials = raw.get("trials", 30)
    if not _is_int(trials) or trials < 1:
        problems.append(("trials", "must be a positive integer"))
    master_seed = raw.get("master_seed", 0)
    if os.environ.get("HESGA_SEED"):
        try:
            master_seed = int(os.environ["HESGA_SEED"])
        except ValueError:
            problems.append(("HESGA_SEED", "must be an integer"))
    if not _is_int(master_seed):
        problems.append(("master_seed", "must be an integer"))
    output_dir = out if out is not None else raw.get("output_dir")
    if not output_dir:
        problems.append(("output_dir", "required (or pass --out)"))

    objective = None
    if space is not None:
        spec = raw.get("objective")
        if not isinstance(spec, dict):
            problems.append(("objective", "must be an object with a 'type'"))
        else:
            try:
                objective = objective_from_config(spec, space)
            except (TypeError, ValueError, KeyError) as exc:
                problems.append(("objective", str(exc)))

    if not problems and name is not None:
        problems.extend(_check_algorithm(name, params, space))
        if objective is not None and hasattr(objective, "hyperparameters"):
            problems.extend(_check_mlp_space(objective, space))
    if problems:
        raise ConfigValidationError(problems)
    return RunConfig(
        raw, raw.get("label", name), space, objective, name, params, trials, master_seed, Path(output_dir)
    )


def _check_algorithm(name: str, params: dict, space: SearchSpace) -> list[tuple[str, str]]:
    if name in ("hesga", "traditional_ga"):
        try:
            HesgaConfig(**params)
        except ConfigError as exc:
            return [("algorithm", str(exc))]
        except TypeError as exc:
            return [("algorithm", str(exc))]
    elif name == "random":
        if "budget" not in params and "epoch_budget" not in params:
            return [("algorithm.budget", "random search needs 'budget' or 'epoch_budget'")]
        for key in ("budget", "epoch_budget"):
            if key in params and (not _is_int(params[key]) or params[key] < 1):
                return [(f"algorithm.{key}", "must be a positive integer")]
        if params.get("budget") is None and params["epoch_budget"] < params["n_e"]:
            return [("algorithm.epoch_budget", "smaller than one full evaluation")]
    elif name == "grid":
        strides = params.get("stride_bits", {})
        if not isinstance(strides, dict):
            return [("algorithm.stride_bits", "must map dimension names to integers")]
        probs = []
        for k, v in strides.items():
            if k not in space.names:
                probs.append((f"algorithm.stride_bits.{k}", "unknown dimension"))
            elif not _is_int(v) or not 0 <= v <= space[k].bits:
                probs.append((f"algorithm.stride_bits.{k}", f"must lie in [0, {space[k].bits}]"))
        if not probs and grid_cardinality(space, strides) > DEFAULT_ENUMERATION_LIMIT:
            probs.append(("algorithm.stride_bits", "grid exceeds the enumeration limit"))
        return probs
    return []


def _check_mlp_space(objective, space: SearchSpace) -> list[tuple[str, str]]:
    probs = []
    for role, dim in objective.mapping.items():
        if dim not in space.names:
            probs.append((f"objective.mapping.{role}", f"dimension {dim!r} not in search_space"))
    if not probs:
        batch_dim = space[objective.mapping["batch_size"]]
        if batch_dim.high > objective.dataset.n_train:
            probs.append(
                ("objective.n_train", f"largest batch size {batch_dim.high} exceeds n_train")
            )
    return probs


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, "trial", trial)


def _run_trial(cfg: RunConfig, seed: int, workers: int):
    name, p = cfg.algorithm, cfg.params
    if name == "hesga":
        return run(cfg.hesga_config(seed), cfg.space, cfg.objective, workers=workers)
    if name == "traditional_ga":
        return traditional_ga(cfg.space, cfg.objective, cfg.hesga_config(seed), workers=workers)
    if name == "random":
        return random_search(
            cfg.space, cfg.objective, p["n_e"], p.get("budget"), seed, p.get("epoch_budget")
        )
    if name == "grid":
        return grid_search(cfg.space, cfg.objective, p["n_e"], p.get("stride_bits", {}), seed)
    raise ConfigValidationError([("algorithm.name", f"unknown algorithm {name!r}")])


def execute_trials(cfg: RunConfig, workers: int = 1) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seeds = [trial_seed(cfg.master_seed, i) for i in range(cfg.trials)]
    manifest = {
        "version": __version__,
        "config": cfg.raw,
        "master_seed": cfg.master_seed,
        "trial_seeds": seeds,
        "started": _now(),
        "finished": None,
        "status": "running",
        "files": ["summary.csv"] + [f"trial_{i}/history.csv" for i in range(cfg.trials)]
        + [f"trial_{i}/best.json" for i in range(cfg.trials)],
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2))

    summary = []
    status = EXIT_OK
    try:
        for i, seed in enumerate(seeds):
            res = _run_trial(cfg, seed, workers)
            tdir = out / f"trial_{i}"
            tdir.mkdir(exist_ok=True)
            rows = [[r.gen, r.best_rmse, r.ev_fast, r.ev_full, r.epoch_units] for r in res.history]
            (tdir / "history.csv").write_text(_csv_text(HISTORY_HEADER, rows))
            best = {"genome": res.genome.bits, "assignment": res.assignment, "rmse": res.score.rmse}
            (tdir / "best.json").write_text(json.dumps(best, indent=2) + "\n")
            b = res.budget
            summary.append(
                [cfg.label, i, seed, res.genome.bits, res.score.rmse, b.ev_fast, b.ev_full, b.epoch_units]
            )
    except Exception as exc:  # noqa: BLE001 - keep partial results, report and fail
        print(f"error: trial {len(summary)} failed: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    (out / "summary.csv").write_text(_csv_text(SUMMARY_HEADER, summary))
    manifest["finished"] = _now()
    manifest["status"] = "ok" if status == EXIT_OK else "failed"
    manifest["completed_trials"] = len(summary)
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2))
    if status == EXIT_OK and summary:
        m = sum(r[4] for r in summary) / len(summary)
        print(f"{cfg.label}: {len(summary)} trials, mean best RMSE {m:.6f}; results in {out}")
    return status


def read_summary(path: str | Path) -> tuple[str, list[dict]]:
    text = Path(path).read_text()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SUMMARY_HEADER:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no trials")
    return rows[0]["label"], rows


def read_trialset(path: str | Path) -> TrialSet:
    label, rows = read_summary(path)
    return TrialSet(label, [float(r["best_rmse"]) for r in rows])


def read_history(path: str | Path) -> list[dict]:
    reader = csv.DictReader(io.StringIO(Path(path).read_text()))
    if reader.fieldnames != HISTORY_HEADER:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    return list(reader)


def _config_or_exit(args, out=None) -> RunConfig | None:
    try:
        return load_config(args.config, out)
    except ConfigValidationError as exc:
        for p, m in exc.problems:
            print(f"config error: {p}: {m}", file=sys.stderr)
        return None


def cmd_run(args) -> int:
    cfg = _config_or_exit(args, args.out)
    if cfg is None:
        return EXIT_CONFIG
    if cfg.algorithm != "hesga":
        print(f"config error: algorithm.name: 'run' expects 'hesga', got {cfg.algorithm!r} "
              "(use the 'baseline' subcommand)", file=sys.stderr)
        return EXIT_CONFIG
    return execute_trials(cfg, args.parallel)


def cmd_baseline(args) -> int:
    cfg = _config_or_exit(args, args.out)
    if cfg is None:
        return EXIT_CONFIG
    if cfg.algorithm not in BASELINES:
        print(f"config error: algorithm.name: baseline expects one of {list(BASELINES)}, "
              f"got {cfg.algorithm!r}", file=sys.stderr)
        return EXIT_CONFIG
    return execute_trials(cfg, args.parallel)


def cmd_oracle(args) -> int:
    cfg = _config_or_exit(args, args.out)
    if cfg is None:
        return EXIT_CONFIG
    opts = cfg.raw.get("oracle", {})
    n_e = int(opts.get("n_e", cfg.n_e()))
    limit = int(opts.get("limit", DEFAULT_ENUMERATION_LIMIT))
    try:
        table = exhaustive_oracle(cfg.space, cfg.objective, n_e, limit=limit)
    except EnumerationTooLarge as exc:
        print(f"config error: search_space: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    table.write(cfg.output_dir / "oracle.csv")
    best = table.best
    print(f"cardinality: {len(table)}")
    print(f"best: {best.genome.bits} {json.dumps(best.assignment)} rmse={best.rmse!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        sets = [read_trialset(p) for p in args.paths]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = comparison_report(sets, args.alpha)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report.to_csv())
    else:
        sys.stdout.write("\n" + report.to_csv())
    return EXIT_OK


def predicted_costs(cfg: RunConfig) -> tuple[float, int]:
    """Closed-form and exact-counter epoch predictions for one trial."""
    p = cfg.params
    if cfg.algorithm == "hesga":
        hc = cfg.hesga_config(0)
        return cost_in_epoch_units(hc), exact_epoch_units(hc)
    if cfg.algorithm == "traditional_ga":
        c = traditional_ga_cost(cfg.hesga_config(0))
        return float(c), c
    if cfg.algorithm == "random":
        n = p.get("budget") or p["epoch_budget"] // p["n_e"]
        if p.get("budget") and p.get("epoch_budget"):
            n = min(n, p["epoch_budget"] // p["n_e"])
        return float(n * p["n_e"]), n * p["n_e"]
    c = grid_cardinality(cfg.space, p.get("stride_bits", {})) * p["n_e"]
    return float(c), c


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def cmd_cost(args) -> int:
    cfg = _config_or_exit(args, args.out or args.run_dir or ".")
    if cfg is None:
        return EXIT_CONFIG
    closed, exact = predicted_costs(cfg)
    print(f"predicted_epoch_units: {_num(closed)}")
    print(f"exact_epoch_units: {exact}")
    if not args.run_dir:
        return EXIT_OK
    try:
        _, rows = read_summary(Path(args.run_dir) / "summary.csv")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    measured = sorted({int(r["epoch_units"]) for r in rows})
    print(f"measured_epoch_units: {' '.join(map(str, measured))}")
    if measured != [exact]:
        print("cost mismatch: measured epochs differ from the counter prediction", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hesga", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (
        ("run", cmd_run, "run HESGA trials"),
        ("baseline", cmd_baseline, "run baseline trials (random, grid, traditional_ga)"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--parallel", type=int, default=1, help="evaluation workers")
        p.set_defaults(func=fn)

    p = sub.add_parser("oracle", help="exhaustively evaluate the search space")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="compare trial summaries")
    p.add_argument("paths", nargs="+", help="summary.csv files")
    p.add_argument("--alpha", type=float, default=0.05, help="two-tailed significance level")
    p.add_argument("--out", help="directory for report.csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cost", help="predicted (and measured) training epochs")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", help="completed run directory to check against")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "parallel", 1) < 1:
        print("config error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
