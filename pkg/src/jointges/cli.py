"""Command-line front end: ``simulate``, ``fit``, ``evaluate``, ``replicate``.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 data-shape mismatch,
5 search failure, 6 too few successful replicates.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    SHD_CONVENTION,
    ExperimentConfig,
    confusion,
    matched_roc_wins,
    rates,
    roc_sweep,
    roc_to_csv,
    run_comparison,
    run_replicates,
)
from .fileio import (
    FormatError,
    dump_graph,
    dump_samples,
    dump_sem,
    load_graph,
    load_interventions,
    load_samples,
    sha256_file,
    write_atomic,
)
from .graph import Dag, GraphError, Pdag, complete_to_cpdag, shd
from .pipeline import joint_ges
from .refit import LassoConfig, RefitError
from .scoring import MultiDataset, ScoreConfig, ScoringError
from .search import SearchConfig, SearchError, separate_fit
from .sem import JointModelConfig, SemError, random_joint_model, sample

log = logging.getLogger("jointges")

OUT_ENV = "JOINTGES_OUT"
EXIT_CONFIG, EXIT_IO, EXIT_SHAPE, EXIT_SEARCH, EXIT_REPLICATES = 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: malformed JSON: {exc}") from exc


class _Run:
    """Collects outputs in memory and writes them, plus the manifest, at the end."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.started = _now()
        self.inputs: dict[str, str] = {}
        self.files: dict[str, str] = {}
        self.extra: dict = {}
        self.config: dict = {}

    def add_input(self, path: str) -> None:
        try:
            self.inputs[str(path)] = sha256_file(path)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc

    def put(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self) -> Path:
        out = Path(self.args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                write_atomic(out / name, text)
            manifest = {
                "tool": "jointges",
                "version": __version__,
                "command": self.command,
                "config": self.config,
                "seed": self.args.seed,
                "jobs": self.args.jobs,
                "inputs": self.inputs,
                "outputs": {name: sha256_file(out / name) for name in sorted(self.files)},
                "started": self.started,
                "finished": _now(),
                **self.extra,
            }
            write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write to {out}: {exc.strerror or exc}") from exc
        return out


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    run = _Run(args, "simulate")
    run.add_input(args.config)
    raw = _read_json(args.config)
    if not isinstance(raw, dict):
        raise CliError(EXIT_CONFIG, "config must be a JSON object")
    raw = dict(raw)
    n_k = raw.pop("n_k", 200)
    try:
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = JointModelConfig.from_dict(raw)
        sizes = [int(n_k)] * cfg.K if isinstance(n_k, int) else [int(v) for v in n_k]
        if len(sizes) != cfg.K or min(sizes) < 1:
            raise ValueError(f"n_k must be a positive count or a list of {cfg.K} counts")
        rng = np.random.default_rng(cfg.seed)
        dags, sems, _ = random_joint_model(cfg, rng)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{args.config}: {exc}") from exc
    run.config = {**cfg.to_dict(), "n_k": sizes}
    for k, (m, n) in enumerate(zip(sems, sizes)):
        run.put(f"class{k}.csv", dump_samples(sample(m, n, rng)))
        run.put(f"true_class{k}.sem", dump_sem(m))
    out = run.commit()
    log.info("wrote %d classes to %s", cfg.K, out)
    return 0


# ---------------------------------------------------------------------------
# fit

def _load_classes(paths: list[str], run: _Run) -> np.ndarray:
    header, mats = None, []
    for path in paths:
        run.add_input(path)
        try:
            names, X = load_samples(_read(path))
        except FormatError as exc:
            raise CliError(EXIT_SHAPE, f"{path}: {exc}") from exc
        if header is None:
            header = names
        elif names != header:
            raise CliError(EXIT_SHAPE, f"{path}: header differs from {paths[0]}")
        mats.append(X)
    return mats


def _check_constraint(fit, spec) -> None:
    for k, (m, targets) in enumerate(zip(fit.per_class, spec.targets)):
        for j in targets:
            if np.any(m.A[:, j] != 0):
                raise CliError(EXIT_SEARCH, f"class {k} has edges into intervened node {j}")


def cmd_fit(args) -> int:
    run = _Run(args, "fit")
    mats = _load_classes(args.data, run)
    spec = None
    if args.interventions:
        run.add_input(args.interventions)
        try:
            spec = load_interventions(_read(args.interventions))
        except FormatError as exc:
            raise CliError(EXIT_CONFIG, f"{args.interventions}: {exc}") from exc
        if spec.K != len(mats):
            raise CliError(EXIT_SHAPE, f"intervention file lists {spec.K} classes, got {len(mats)} data files")
    try:
        data = MultiDataset(mats, spec)
    except (ScoringError, SemError) as exc:
        raise CliError(EXIT_SHAPE, str(exc)) from exc
    try:
        score = ScoreConfig(scaling_c=args.lambda1_c, max_in_degree=args.max_in_degree)
        search = SearchConfig(max_in_degree=args.max_in_degree)
        lasso = LassoConfig(lambda2=args.lambda2, cv_folds=args.cv_folds, seed=args.seed or 0)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    run.config = {
        "mode": args.mode,
        "lambda1_c": args.lambda1_c,
        "lambda1_sq": score.penalty(data),
        "max_in_degree": args.max_in_degree,
        "lambda2": args.lambda2,
        "cv_folds": args.cv_folds,
        "interventions": [sorted(t) for t in spec.targets] if spec else None,
    }
    traces = []
    try:
        if args.mode == "joint":
            fit = joint_ges(data, score, search, lasso)
            traces.append(fit.trace)
            if spec is not None:
                _check_constraint(fit, spec)
            run.put("union.edges", dump_graph(fit.union))
            for k, m in enumerate(fit.per_class):
                run.put(f"class{k}.sem", dump_sem(m))
            run.put("trace.jsonl", fit.trace.to_jsonl())
            run.put("summary.json", fit.summary_json() + "\n")
        else:
            results = separate_fit(data, score, search)
            for k, (g, tr) in enumerate(results):
                traces.append(tr)
                run.put(f"cpdag{k}.edges", dump_graph(g))
                run.put(f"trace{k}.jsonl", tr.to_jsonl())
            run.put("summary.json", json.dumps({
                "cpdag_edges": [len(g) for g, _ in results],
                "final_scores": [tr.final_score for _, tr in results],
                "trace_lengths": [len(tr) for _, tr in results],
            }, indent=2, sort_keys=True) + "\n")
    except (SearchError, RefitError, GraphError) as exc:
        _dump_failure(args, traces, exc)
        raise CliError(EXIT_SEARCH, f"search failed: {exc}") from exc
    except CliError as exc:
        _dump_failure(args, traces, exc)
        raise
    run.commit()
    return 0


def _dump_failure(args, traces, exc) -> None:
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        text = "".join(t.to_jsonl() for t in traces if t is not None)
        write_atomic(out / "failed_trace.jsonl", text)
        log.error("search failure (%s); trace written to %s", exc, out / "failed_trace.jsonl")
    except OSError:
        log.error("search failure (%s); could not write trace", exc)


# ---------------------------------------------------------------------------
# evaluate

def _compare(est, truth, level: str):
    if isinstance(est, Pdag) or level == "cpdag":
        truth_cmp = complete_to_cpdag(truth) if isinstance(truth, Dag) else truth
        if level == "cpdag" and isinstance(est, Dag):
            est = complete_to_cpdag(est)
        return shd(est, truth_cmp), "cpdag"
    return shd(est, truth), "dag"


def cmd_evaluate(args) -> int:
    run = _Run(args, "evaluate")
    if len(args.estimate) != len(args.truth):
        raise CliError(EXIT_SHAPE, f"{len(args.estimate)} estimate files vs {len(args.truth)} truth files")
    rows = []
    for k, (ep, tp_) in enumerate(zip(args.estimate, args.truth)):
        run.add_input(ep)
        run.add_input(tp_)
        try:
            est, truth = load_graph(_read(ep)), load_graph(_read(tp_))
        except (FormatError, GraphError) as exc:
            raise CliError(EXIT_SHAPE, str(exc)) from exc
        if est.p != truth.p:
            raise CliError(EXIT_SHAPE, f"class {k}: estimate has p={est.p}, truth has p={truth.p}")
        if isinstance(truth, Pdag):
            raise CliError(EXIT_SHAPE, f"{tp_}: truth must be a DAG")
        d, level = _compare(est, truth, args.level)
        tp, fp, fn, tn = confusion(est, truth)
        tpr, fpr = rates(tp, fp, fn, tn)
        rows.append({"class": str(k), "shd": d, "level": level, "tp": tp, "fp": fp, "fn": fn, "tn": tn,
                     "tpr": tpr, "fpr": fpr})
    mean = {"class": "mean", "level": "-"}
    for key in ("shd", "tp", "fp", "fn", "tn", "tpr", "fpr"):
        mean[key] = float(np.mean([r[key] for r in rows]))
    rows.append(mean)
    cols = ("class", "shd", "level", "tp", "fp", "fn", "tn", "tpr", "fpr")
    csv_lines = ["# per-class SHD (level: dag or cpdag) and skeleton confusion counts; last row averages",
                 ",".join(cols)]
    csv_lines += [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) for r in rows]
    run.config = {"level": args.level}
    run.put("metrics.csv", "\n".join(csv_lines) + "\n")
    run.put("metrics.json", json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n")
    run.commit()
    return 0


# ---------------------------------------------------------------------------
# replicate

def cmd_replicate(args) -> int:
    run = _Run(args, "replicate")
    run.add_input(args.config)
    raw = _read_json(args.config)
    if not isinstance(raw, dict):
        raise CliError(EXIT_CONFIG, "config must be a JSON object")
    try:
        if args.seed is not None:
            raw = {**raw, "master_seed": args.seed}
        cfg = ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{args.config}: {exc}") from exc
    run.config = cfg.to_dict()
    grid = sorted(set(cfg.scaling_grid) | set(cfg.tuning_grid))
    t0 = time.perf_counter()
    records = run_replicates(cfg, jobs=args.jobs, grid=grid)
    summary = run_comparison(cfg, records=records)
    roc = roc_sweep(cfg, records=records)
    matched, wins = matched_roc_wins(roc)
    run.put("summary.csv", summary.to_csv(runtimes=False))
    run.put("summary.json", summary.to_json(runtimes=False) + "\n")
    run.put("roc.csv", roc_to_csv(roc))
    run.put("roc.json", json.dumps({
        "points": {m: [{"fpr": f, "tpr": t, "c": c} for f, t, c in pts] for m, pts in roc.items()},
        "matched_points": matched,
        "joint_wins": wins,
        "shd_convention": SHD_CONVENTION,
    }, indent=2, sort_keys=True) + "\n")
    run.extra["timing"] = {
        "wall_seconds": time.perf_counter() - t0,
        "mean_runtime": {f"{r['method']}@{r['c']}": r["mean_runtime"] for r in summary.rows},
    }
    run.extra["failed_replicates"] = summary.failed
    run.commit()
    for c in cfg.scaling_grid:
        j, s = summary.row("joint", c), summary.row("separate", c)
        log.info("c=%g  SHD joint %.2f  separate %.2f", c, j["mean_shd"], s["mean_shd"])
    if summary.success_fraction < 0.9:
        log.error("only %.0f%% of replicates succeeded", 100 * summary.success_fraction)
        return EXIT_REPLICATES
    return 0


# ---------------------------------------------------------------------------

def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed")
    common.add_argument("--jobs", type=_pos_int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help=f"output directory (default: ${OUT_ENV} or ./jointges_out)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="jointges", parents=[common],
                                 description="Joint estimation of related Gaussian DAG models.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a collection of related SEMs")
    p.add_argument("config", help="JSON model config (model fields plus n_k)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="estimate per-class DAGs from CSV samples")
    p.add_argument("data", nargs="+", help="one CSV per class with a shared header")
    p.add_argument("--mode", choices=("joint", "separate"), default="joint")
    p.add_argument("--lambda1-c", type=float, default=2.0, help="penalty c in c*log(p)/n")
    p.add_argument("--max-in-degree", type=_nonneg_int, default=None)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda2", type=float, default=None, help="fixed l1 weight for the refit")
    g.add_argument("--cv", action="store_true", help="choose the l1 weight by cross-validation (default)")
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--interventions", help="JSON array of per-class target lists")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", parents=[common], help="SHD and confusion counts against true graphs")
    p.add_argument("--estimate", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--level", choices=("auto", "dag", "cpdag"), default="auto",
                   help="auto compares CPDAG estimates against true CPDAGs, DAGs against DAGs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replicate", parents=[common], help="joint vs separate simulation study")
    p.add_argument("config", help="JSON experiment config")
    p.set_defaults(func=cmd_replicate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", None)
    args.jobs = getattr(args, "jobs", 1)
    args.out = getattr(args, "out", None) or os.environ.get(OUT_ENV) or "jointges_out"
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"jointges: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
