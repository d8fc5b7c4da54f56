"""Metrics and simulation experiments comparing joint and separate estimation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .graph import Dag, Pdag, SizeMismatch, complete_to_cpdag, consistent_extension, shd, skeleton
from .pipeline import PipelineConfig, class_graphs, joint_ges, separate_ges
from .refit import LassoConfig
from .scoring import MultiDataset, ScoreConfig
from .search import SearchConfig
from .sem import JointModelConfig, SemError, random_joint_model, sample

log = logging.getLogger(__name__)

SHD_CONVENTION = {
    "joint": "refit class DAG vs true class DAG",
    "separate": "estimated CPDAG vs CPDAG of true class DAG",
}


def confusion(estimate: Dag | Pdag, truth: Dag | Pdag, strict: bool = False) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` over the ``p(p-1)/2`` node pairs.

    Skeleton-level by default, and ``tn`` counts pairs absent from both graphs.
    With ``strict=True`` an estimated edge is a true
    positive only if its orientation state (including undirected) matches.
    """
    if estimate.p != truth.p:
        raise SizeMismatch(f"p={estimate.p} vs p={truth.p}")
    se, st = skeleton(estimate), skeleton(truth)
    total = truth.p * (truth.p - 1) // 2
    if strict:
        oe, ot = _orient_state(estimate), _orient_state(truth)
        tp = sum(1 for e in se & st if oe[e] == ot[e])
    else:
        tp = len(se & st)
    fp = len(se) - tp
    fn = len(st) - tp
    return tp, fp, fn, total - len(se | st)


def _orient_state(g):
    out = {}
    directed = g.edges if isinstance(g, Dag) else g.directed
    for i, j in directed:
        out[(min(i, j), max(i, j))] = (i, j)
    if isinstance(g, Pdag):
        for e in g.undirected:
            out[e] = "-"
    return out


def rates(tp: int, fp: int, fn: int, tn: int) -> tuple[float, float]:
    tpr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return tpr, fpr


def hub_nodes(union: Dag, min_total_degree: int = 5) -> set:
    """Nodes whose in-degree plus out-degree is strictly larger than ``min_total_degree``."""
    deg = [0] * union.p
    for i, j in union.edges:
        deg[i] += 1
        deg[j] += 1
    return {v for v, d in enumerate(deg) if d > min_total_degree}


# ---------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    model: JointModelConfig = field(default_factory=JointModelConfig)
    n_k: int = 200
    replicates: int = 100
    scaling_grid: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    tuning_grid: tuple = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
    master_seed: int = 0
    max_in_degree: int | None = None
    cv_folds: int = 10
    lasso_grid_size: int = 50

    def __post_init__(self):
        object.__setattr__(self, "scaling_grid", tuple(float(c) for c in self.scaling_grid))
        object.__setattr__(self, "tuning_grid", tuple(float(c) for c in self.tuning_grid))
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.scaling_grid or not self.tuning_grid:
            raise ValueError("grids must be non-empty")
        if self.n_k < 2:
            raise ValueError("n_k must be at least 2")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        d = dict(d)
        if "model" in d:
            d["model"] = JointModelConfig.from_dict(d["model"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["model"] = self.model.to_dict()
        out["scaling_grid"] = list(self.scaling_grid)
        out["tuning_grid"] = list(self.tuning_grid)
        return out


def _lasso_cfg(cfg: ExperimentConfig, seed: int) -> LassoConfig:
    return LassoConfig(cv_folds=cfg.cv_folds, grid_size=cfg.lasso_grid_size, seed=seed)


def _class_metrics(est, truth, truth_cmp) -> dict:
    tp, fp, fn, tn = confusion(est, truth)
    tpr, fpr = rates(tp, fp, fn, tn)
    return {"shd": shd(est, truth_cmp), "tp": tp, "fp": fp, "fn": fn, "tn": tn, "tpr": tpr, "fpr": fpr}


def run_replicate(cfg: ExperimentConfig, r: int, grid: Sequence[float] | None = None) -> dict:
    """One simulated collection, estimated by both methods at every grid value of ``c``.

    Never raises: failures are reported under ``"error"``.
    """
    grid = sorted(set(cfg.scaling_grid) | set(cfg.tuning_grid)) if grid is None else list(grid)
    rec = {"replicate": r, "error": None, "points": []}
    try:
        rng = np.random.default_rng([cfg.master_seed, r])
        dags, sems, _ = random_joint_model(cfg.model, rng)
        data = MultiDataset([sample(s, cfg.n_k, rng) for s in sems])
        true_cpdags = [complete_to_cpdag(d) for d in dags]
        search = SearchConfig(max_in_degree=cfg.max_in_degree)
        for c in grid:
            score = ScoreConfig(scaling_c=c, max_in_degree=cfg.max_in_degree)
            t0 = time.perf_counter()
            fit = joint_ges(data, score, search, _lasso_cfg(cfg, cfg.master_seed * 1_000_003 + r))
            t1 = time.perf_counter()
            sep = separate_ges(data, score, search)
            t2 = time.perf_counter()
            rec["points"].append({
                "c": c,
                "joint": [_class_metrics(e, t, t) for e, t in zip(fit.class_dags, dags)],
                "separate": [_class_metrics(e, t, tc) for e, t, tc in zip(sep, dags, true_cpdags)],
                "joint_union_edges": len(fit.union),
                "runtime": {"joint": t1 - t0, "separate": t2 - t1},
            })
    except Exception as exc:  # isolate the replicate
        log.exception("replicate %d failed", r)
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _run_one(args):
    cfg, r, grid = args
    return run_replicate(cfg, r, grid)


def run_replicates(cfg: ExperimentConfig, jobs: int = 1, grid=None) -> list[dict]:
    tasks = [(cfg, r, grid) for r in range(cfg.replicates)]
    if jobs <= 1:
        recs = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            recs = list(ex.map(_run_one, tasks))
    return sorted(recs, key=lambda rec: rec["replicate"])


@dataclass
class MetricsSummary:
    """Aggregated rows per (method, c) plus per-replicate SHD for paired comparisons."""

    rows: list
    per_replicate: dict
    failed: list
    replicates: int
    meta: dict = field(default_factory=dict)

    COLUMNS = ("method", "c", "mean_shd", "se_shd", "mean_tpr", "mean_fpr", "n_ok", "mean_runtime")

    def row(self, method: str, c: float) -> dict:
        for r in self.rows:
            if r["method"] == method and r["c"] == c:
                return r
        raise KeyError((method, c))

    def paired_difference(self, c: float) -> tuple[float, float]:
        """Mean and standard error of SHD(separate) - SHD(joint) over replicates."""
        j = np.array(self.per_replicate[("joint", c)])
        s = np.array(self.per_replicate[("separate", c)])
        d = s - j
        se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else float("nan")
        return float(d.mean()), se

    @property
    def success_fraction(self) -> float:
        return 1.0 - len(self.failed) / self.replicates

    def to_csv(self, runtimes: bool = True) -> str:
        cols = self.COLUMNS if runtimes else self.COLUMNS[:-1]
        buf = io.StringIO()
        buf.write("# columns: method, scaling constant c, mean/SE of per-replicate SHD averaged over classes,\n")
        buf.write("# mean skeleton TPR/FPR (macro-averaged over classes and replicates), successful replicates"
                  + (", mean runtime in seconds" if runtimes else "") + ".\n")
        buf.write("# SHD conventions: " + json.dumps(SHD_CONVENTION) + "\n")
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in cols})
        return buf.getvalue()

    def to_json(self, runtimes: bool = True) -> str:
        rows = self.rows if runtimes else [{k: v for k, v in r.items() if k != "mean_runtime"} for r in self.rows]
        return json.dumps({
            "rows": rows,
            "failed": self.failed,
            "replicates": self.replicates,
            "shd_convention": SHD_CONVENTION,
            "meta": self.meta,
        }, indent=2, sort_keys=True)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _aggregate(records: list, grid: Sequence[float]) -> MetricsSummary:
    ok = [r for r in records if r["error"] is None]
    failed = [{"replicate": r["replicate"], "error": r["error"]} for r in records if r["error"] is not None]
    rows, per_rep = [], {}
    for c in grid:
        for method in ("joint", "separate"):
            shds, tprs, fprs, times = [], [], [], []
            for rec in ok:
                pt = next(p for p in rec["points"] if p["c"] == c)
                cls = pt[method]
                shds.append(float(np.mean([m["shd"] for m in cls])))
                tprs.append(float(np.mean([m["tpr"] for m in cls])))
                fprs.append(float(np.mean([m["fpr"] for m in cls])))
                times.append(pt["runtime"][method])
            per_rep[(method, c)] = shds
            n = len(shds)
            rows.append({
                "method": method,
                "c": c,
                "mean_shd": float(np.mean(shds)) if n else float("nan"),
                "se_shd": float(np.std(shds, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
                "mean_tpr": float(np.mean(tprs)) if n else float("nan"),
                "mean_fpr": float(np.mean(fprs)) if n else float("nan"),
                "n_ok": n,
                "mean_runtime": float(np.mean(times)) if n else float("nan"),
            })
    return MetricsSummary(rows=rows, per_replicate=per_rep, failed=failed, replicates=len(records))


def run_comparison(cfg: ExperimentConfig, jobs: int = 1, records: list | None = None) -> MetricsSummary:
    """SHD/TPR/FPR of joint vs separate estimation at every ``c`` in ``cfg.scaling_grid``."""
    if records is None:
        records = run_replicates(cfg, jobs, grid=cfg.scaling_grid)
    summary = _aggregate(records, cfg.scaling_grid)
    summary.meta["config"] = cfg.to_dict()
    return summary


def roc_sweep(cfg: ExperimentConfig, jobs: int = 1, records: list | None = None) -> dict:
    """Average ``(fpr, tpr)`` per tuning value and method, sorted by FPR."""
    if records is None:
        records = run_replicates(cfg, jobs, grid=cfg.tuning_grid)
    summary = _aggregate(records, cfg.tuning_grid)
    out = {}
    for method in ("joint", "separate"):
        pts = [(summary.row(method, c)["mean_fpr"], summary.row(method, c)["mean_tpr"], c)
               for c in cfg.tuning_grid]
        pts.sort()
        out[method] = pts
    return out


def roc_to_csv(roc: dict) -> str:
    buf = io.StringIO()
    buf.write("# columns: method, fpr, tpr, c (tuning value); skeleton-level, macro-averaged\n")
    buf.write("method,fpr,tpr,c\n")
    for method, pts in roc.items():
        for fpr, tpr, c in pts:
            buf.write(f"{method},{fpr!r},{tpr!r},{c!r}\n")
    return buf.getvalue()


def matched_roc_wins(roc: dict, window: float = 0.02) -> tuple[int, int]:
    """Count joint points with a separate point within ``window`` FPR, and how many of those win.

    Each joint point is matched to the separate point with the nearest FPR.
    A win means joint TPR >= separate TPR.
    """
    sep = roc["separate"]
    matched = wins = 0
    for fpr, tpr, _ in roc["joint"]:
        near = min(sep, key=lambda s: (abs(s[0] - fpr), s[0]))
        if abs(near[0] - fpr) <= window:
            matched += 1
            wins += tpr >= near[1]
    return matched, wins


# ---------------------------------------------------------------------------
# stability selection

@dataclass
class StabilityResult:
    frequencies: np.ndarray
    graphs: list
    threshold: float
    subsamples: int


def _subsample_edges(data: MultiDataset, cfg: PipelineConfig, fraction: float, seed: int, s: int) -> list:
    rng = np.random.default_rng([seed, s])
    rows = [np.sort(rng.choice(n, size=max(int(math.floor(fraction * n)), 1), replace=False)) for n in data.n_k]
    graphs = class_graphs(data.subset(rows), cfg)
    out = []
    for g in graphs:
        d = g if isinstance(g, Dag) else consistent_extension(g)
        out.append(d.edges)
    return out


def stability_selection(data: MultiDataset, cfg: PipelineConfig, subsamples: int = 100,
                        fraction: float = 0.5, threshold: float = 0.6, seed: int = 0,
                        order: Sequence[int] | None = None) -> StabilityResult:
    """Per-class edge selection frequencies over seeded row subsamples.

    Each subsample ``s`` draws ``floor(fraction * n_k)`` rows per class without
    replacement from a stream seeded by ``(seed, s)``, so the result does not
    depend on ``order``.
    """
    if subsamples < 2:
        raise ValueError("need at least 2 subsamples")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    counts = np.zeros((data.K, data.p, data.p), dtype=np.int64)
    for s in (range(subsamples) if order is None else order):
        for k, edges in enumerate(_subsample_edges(data, cfg, fraction, seed, s)):
            for i, j in edges:
                counts[k, i, j] += 1
    freq = counts / subsamples
    graphs = []
    for k in range(data.K):
        if threshold == 0:
            sel = np.argwhere(counts[k] > 0)
        else:
            sel = np.argwhere(freq[k] >= threshold)
        graphs.append(frozenset(map(tuple, sel.tolist())))
    return StabilityResult(frequencies=freq, graphs=graphs, threshold=threshold, subsamples=subsamples)
