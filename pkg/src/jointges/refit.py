"""Per-class sparse refits restricted to the parent sets of an estimated union graph.

The lasso objective is ``(1/n)|y - X a|^2 + lam * |a|_1``; ``lam`` plays the
role of the squared second-stage penalty. Predictors are centred columns of
the class data; no intercept is fitted.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import Dag, Pdag, enumerate_class
from .scoring import MultiDataset
from .search import SearchTrace
from .sem import SemModel

log = logging.getLogger(__name__)


class RefitError(ValueError):
    pass


class GridEmpty(RefitError):
    pass


class ClassTooLarge(RefitError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LassoConfig:
    """Second-stage settings.

    ``lambda2`` fixes the l1 weight for every regression; leave it ``None`` to
    pick it by ``cv_folds``-fold cross-validation over a log-spaced grid of
    ``grid_size`` values from the KKT maximum down to ``grid_ratio`` times it.
    """

    lambda2: float | None = None
    grid_size: int = 50
    grid_ratio: float = 1e-3
    cv_folds: int = 10
    tol: float = 1e-8
    max_iters: int = 100_000
    seed: int = 0
    per_node: bool = True
    standardize: bool = False
    rss_floor: float = 1e-12

    def __post_init__(self):
        if self.lambda2 is not None and self.lambda2 < 0:
            raise RefitError("lambda2 must be non-negative")
        if self.cv_folds < 2:
            raise RefitError("cv_folds must be at least 2")
        if not self.tol > 0:
            raise RefitError("tol must be positive")
        if self.grid_size < 1 or not 0 < self.grid_ratio < 1:
            raise RefitError("bad lambda grid specification")


@dataclass
class FitResult:
    union: Dag
    per_class: list
    trace: SearchTrace | None = None
    chosen_lambda2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def class_dags(self) -> list:
        return [m.dag for m in self.per_class]

    @property
    def total_edges(self) -> int:
        return sum(len(d) for d in self.class_dags)

    def summary(self) -> dict:
        out = {
            "union_edges": len(self.union),
            "class_edges": [len(d) for d in self.class_dags],
            "trace_length": len(self.trace) if self.trace is not None else 0,
            "final_score": self.trace.final_score if self.trace is not None else None,
        }
        if self.chosen_lambda2 is not None:
            out["chosen_lambda2"] = [[None if np.isnan(v) else float(v) for v in row]
                                     for row in self.chosen_lambda2]
        out.update(self.meta)
        return out

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _moments(y: np.ndarray, X: np.ndarray):
    n = y.shape[0]
    return X.T @ X / n, X.T @ y / n


def lambda_max(y: np.ndarray, X: np.ndarray) -> float:
    """Smallest l1 weight at which the all-zero vector is optimal: ``2 max|X'y|/n``."""
    if X.shape[1] == 0:
        return 0.0
    return float(2.0 * np.max(np.abs(X.T @ y)) / y.shape[0])


def default_grid(y: np.ndarray, X: np.ndarray, size: int = 50, ratio: float = 1e-3) -> np.ndarray:
    lmax = lambda_max(y, X)
    if lmax <= 0:
        return np.zeros(1)
    return np.geomspace(lmax, lmax * ratio, size)


def kkt_violation(y: np.ndarray, X: np.ndarray, a: np.ndarray, lam: float) -> float:
    """Largest stationarity violation of ``a``, measured on the residual directly."""
    if X.shape[1] == 0:
        return 0.0
    g = 2.0 * X.T @ (y - X @ a) / y.shape[0]
    active = a != 0
    viol = np.where(active, np.abs(g - lam * np.sign(a)), np.abs(g) - lam)
    return float(max(viol.max(), 0.0))


def lasso_cd(y: np.ndarray, X: np.ndarray, lam: float, cfg: LassoConfig | None = None) -> np.ndarray:
    """Coordinate descent with soft-thresholding; exact least squares when ``lam == 0``.

    Emits :class:`ConvergenceWarning` and returns the last iterate if the KKT
    violation is still above ``cfg.tol`` after ``cfg.max_iters`` sweeps.
    """
    cfg = cfg or LassoConfig()
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(y.shape[0], -1)
    m = X.shape[1]
    if m == 0:
        return np.zeros(0)
    if lam == 0:
        return np.linalg.lstsq(X, y, rcond=None)[0]
    G, c = _moments(y, X)
    coefs, _, viol = _kernels.cd_lasso_path(G, c, np.array([lam]), tol=cfg.tol, max_iter=cfg.max_iters)
    if viol[0] > cfg.tol:
        warnings.warn(f"lasso did not converge (KKT violation {viol[0]:.2e})", ConvergenceWarning, stacklevel=2)
    return coefs[0]


def lasso_path(y: np.ndarray, X: np.ndarray, grid: np.ndarray, cfg: LassoConfig | None = None) -> np.ndarray:
    """Solutions along ``grid`` (sorted internally, returned in the given order), warm-started."""
    cfg = cfg or LassoConfig()
    grid = np.asarray(grid, dtype=float)
    m = X.shape[1]
    if m == 0:
        return np.zeros((grid.size, 0))
    order = np.argsort(-grid, kind="stable")
    G, c = _moments(y, X)
    coefs, _, _ = _kernels.cd_lasso_path(G, c, grid[order], tol=cfg.tol, max_iter=cfg.max_iters)
    out = np.empty_like(coefs)
    out[order] = coefs
    zero = grid == 0
    if np.any(zero):
        out[zero] = np.linalg.lstsq(X, y, rcond=None)[0]
    return out


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cv_lambda2(y: np.ndarray, X: np.ndarray, grid=None, folds: int = 10, seed: int = 0,
               cfg: LassoConfig | None = None) -> float:
    """Grid value with the smallest mean held-out squared error; ties go to the larger value."""
    cfg = cfg or LassoConfig()
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(y.shape[0], -1)
    n = y.shape[0]
    if grid is None:
        grid = default_grid(y, X, cfg.grid_size, cfg.grid_ratio)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise GridEmpty("empty lambda grid")
    if n < folds:
        raise RefitError(f"{folds} folds need at least {folds} samples, got {n}")
    ids = fold_ids(n, folds, seed)
    err = np.zeros(grid.size)
    for f in range(folds):
        test = ids == f
        train = ~test
        coefs = lasso_path(y[train], X[train], grid, cfg)
        resid = y[test][None, :] - coefs @ X[test].T
        err += np.sum(resid**2, axis=1)
    err /= n
    best = err.min()
    tol = 1e-12 * max(1.0, abs(best))
    ties = np.flatnonzero(err <= best + tol)
    return float(grid[ties].max())


def _design(X: np.ndarray, standardize: bool):
    if not standardize or X.shape[1] == 0:
        return X, np.ones(X.shape[1])
    scale = np.sqrt(np.mean(X**2, axis=0))
    scale[scale == 0] = 1.0
    return X / scale, scale


def refit_classes(data: MultiDataset, union: Dag, cfg: LassoConfig | None = None,
                  trace: SearchTrace | None = None) -> FitResult:
    """Lasso-regress every node on its union parents, class by class.

    Nodes intervened on in class ``k`` (if the dataset carries interventions)
    get no parents in class ``k``.
    """
    cfg = cfg or LassoConfig()
    if union.p != data.p:
        raise RefitError(f"union graph has p={union.p}, data has p={data.p}")
    pas = union.parent_sets()
    chosen = np.full((data.K, data.p), np.nan)
    models = []
    for k, Xk in enumerate(data.classes):
        nk = Xk.shape[0]
        targets = data.interventions.targets[k] if data.interventions is not None else frozenset()
        A = np.zeros((data.p, data.p))
        omega = np.empty(data.p)
        for j in range(data.p):
            y = Xk[:, j]
            parents = [] if j in targets else sorted(pas[j])
            floor = cfg.rss_floor * max(float(y @ y), 1e-300)
            if not parents:
                omega[j] = max(float(y @ y), floor) / nk
                continue
            Xp, scale = _design(Xk[:, parents], cfg.standardize)
            if cfg.lambda2 is not None:
                lam = cfg.lambda2
            else:
                seed = cfg.seed + 7919 * k + j if cfg.per_node else cfg.seed
                lam = cv_lambda2(y, Xp, None, cfg.cv_folds, seed, cfg)
            chosen[k, j] = lam
            coef = lasso_cd(y, Xp, lam, cfg) / scale
            A[parents, j] = coef
            r = y - Xk[:, parents] @ coef
            omega[j] = max(float(r @ r), floor) / nk
        models.append(SemModel(A, omega))
    return FitResult(union=union, per_class=models, trace=trace, chosen_lambda2=chosen)


def sparsest_extension_refit(data: MultiDataset, cpdag: Pdag, cfg: LassoConfig | None = None,
                             cap: int = 1000, exact: bool = True) -> FitResult:
    """Refit every DAG in the class of ``cpdag``; keep the one with fewest total class edges."""
    members, truncated = enumerate_class(cpdag, cap)
    if truncated and exact:
        raise ClassTooLarge(f"equivalence class has more than {cap} members")
    best = None
    for d in members:
        res = refit_classes(data, d, cfg)
        if best is None or res.total_edges < best.total_edges:
            best = res
    if best is None:
        raise RefitError("equivalence class is empty")
    best.meta["class_size"] = len(members)
    best.meta["class_truncated"] = truncated
    return best
