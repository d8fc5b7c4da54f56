"""Decomposable penalized log-likelihood scores for collections of Gaussian DAGs.

All scores are "higher is better". For node ``j`` with parent set ``P``::

    local(j, P) = -( sum_k w_k log(RSS_k(j | P) / n_k) + lambda1_sq * |P| )

where ``RSS_k`` is the least-squares residual of column ``j`` of class ``k``
regressed on the columns in ``P``.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .graph import Dag
from .sem import InterventionSpec, SemModel


class ScoringError(ValueError):
    pass


class TooManyParents(ScoringError):
    pass


class DegreeExceeded(ScoringError):
    pass


class MultiDataset:
    """K sample matrices over a shared set of ``p`` variables.

    Columns are mean-centred on construction unless ``center=False``. Gram
    matrices ``X_k' X_k`` are precomputed once; all regressions are solved
    from them.
    """

    def __init__(self, classes: Sequence[np.ndarray], interventions: InterventionSpec | None = None,
                 center: bool = True):
        mats = [np.array(X, dtype=float, copy=True) for X in classes]
        if not mats:
            raise ScoringError("need at least one class")
        if any(X.ndim != 2 for X in mats):
            raise ScoringError("each class must be a 2-d sample matrix")
        p = mats[0].shape[1]
        if any(X.shape[1] != p for X in mats):
            raise ScoringError("classes do not share the same number of variables")
        if any(X.shape[0] < 1 for X in mats):
            raise ScoringError("every class needs at least one sample")
        if center:
            mats = [X - X.mean(axis=0) for X in mats]
        for X in mats:
            X.setflags(write=False)
        self.classes = mats
        self.p = p
        self.K = len(mats)
        self.n_k = np.array([X.shape[0] for X in mats], dtype=np.int64)
        self.n = int(self.n_k.sum())
        self.weights = self.n_k / self.n
        self.centered = center
        self.gram_stack = np.ascontiguousarray(np.stack([X.T @ X for X in mats]))
        self.gram_stack.setflags(write=False)
        self.grams = list(self.gram_stack)
        if interventions is not None:
            if interventions.K != self.K:
                raise ScoringError(f"intervention spec has {interventions.K} classes, data has {self.K}")
            interventions.validate(p)
        self.interventions = interventions

    def subset(self, rows: Sequence[np.ndarray]) -> "MultiDataset":
        """Dataset restricted to the given row indices per class (re-centred)."""
        return MultiDataset([X[r] for X, r in zip(self.classes, rows)], self.interventions, self.centered)

    def single_class(self, k: int) -> "MultiDataset":
        spec = None
        if self.interventions is not None:
            spec = InterventionSpec((self.interventions.targets[k],))
        return MultiDataset([self.classes[k]], spec, center=False)

    def with_interventions(self, spec: InterventionSpec | None) -> "MultiDataset":
        out = object.__new__(MultiDataset)
        out.__dict__.update(self.__dict__)
        if spec is not None:
            if spec.K != self.K:
                raise ScoringError("intervention spec does not match class count")
            spec.validate(self.p)
        out.interventions = spec
        return out


@dataclass(frozen=True)
class ScoreConfig:
    """Penalty settings.

    ``lambda1_sq`` is the per-edge penalty. When ``scaling_c`` is given the
    penalty is instead ``c * log(p) / n`` with ``n`` the total sample size of
    the dataset being scored. ``rss_floor`` is relative: residual sums are
    clamped at ``rss_floor * |X_j|^2`` before taking logs.
    """

    lambda1_sq: float | None = None
    scaling_c: float | None = 2.0
    max_in_degree: int | None = None
    rss_floor: float = 1e-12

    def __post_init__(self):
        if self.lambda1_sq is None and self.scaling_c is None:
            raise ScoringError("give lambda1_sq or scaling_c")
        if self.lambda1_sq is not None and self.lambda1_sq < 0:
            raise ScoringError("lambda1_sq must be non-negative")
        if self.scaling_c is not None and self.scaling_c < 0:
            raise ScoringError("scaling_c must be non-negative")
        if self.max_in_degree is not None and self.max_in_degree < 0:
            raise ScoringError("max_in_degree must be non-negative")
        if not self.rss_floor > 0:
            raise ScoringError("rss_floor must be positive")

    def penalty(self, data: MultiDataset) -> float:
        if self.lambda1_sq is not None:
            return float(self.lambda1_sq)
        return float(self.scaling_c) * math.log(data.p) / data.n

    def degree_bound(self, p: int) -> int:
        return p - 1 if self.max_in_degree is None else min(self.max_in_degree, p - 1)


def theory_lambda1_sq(p: int, n: int, union_size_guess: int, const: float = 1.0) -> float:
    """Rate ``(log p / n) * max(p / |G_union|, 1)``, scaled by ``const``."""
    return const * math.log(p) / n * max(p / max(union_size_guess, 1), 1.0)


def bic_lambda1_sq(data: MultiDataset) -> float:
    """``sum_k w_k log(n_k) / (2 n_k)``: the low-dimensional consistent choice."""
    return float(sum(w * math.log(n) / (2 * n) for w, n in zip(data.weights, data.n_k)))


class ScoreCache:
    """Residual sums keyed by ``(class, node, sorted parents)``.

    Reads are lock-free; inserts take a lock. ``maxsize`` enables LRU eviction.
    """

    def __init__(self, maxsize: int | None = None):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        val = self._data.get(key)
        if val is None:
            self.misses += 1
        else:
            self.hits += 1
            if self.maxsize is not None:
                with self._lock:
                    if key in self._data:
                        self._data.move_to_end(key)
        return val

    def put(self, key, value) -> None:
        with self._lock:
            self._data[key] = value
            if self.maxsize is not None:
                while len(self._data) > self.maxsize:
                    self._data.popitem(last=False)

    def __len__(self) -> int:
        return len(self._data)


def _canon(parents: Iterable[int]) -> tuple:
    return tuple(sorted(set(int(v) for v in parents)))


def _rss_pinv(G: np.ndarray, j: int, parents: tuple) -> float:
    idx = list(parents)
    gpj = G[idx, j]
    coef = np.linalg.pinv(G[np.ix_(idx, idx)]) @ gpj
    return float(G[j, j]) - float(gpj @ coef)


def _rss_stack(stack: np.ndarray, j: int, parents: tuple) -> np.ndarray:
    """Residual sums for every Gram in ``stack``; rank-deficient blocks use a pseudo-inverse."""
    out = _kernels.gram_rss(stack, j, np.array(parents, dtype=np.int64))
    bad = np.flatnonzero(~np.isfinite(out))
    for k in bad:
        out[k] = _rss_pinv(stack[k], j, parents)
    return out


def _rss_from_gram(G: np.ndarray, j: int, parents: tuple) -> float:
    return float(_rss_stack(np.ascontiguousarray(G[None]), j, parents)[0])


def _check_parents(data: MultiDataset, j: int, parents: tuple, n_min: int) -> None:
    if j in parents:
        raise ScoringError(f"node {j} cannot be its own parent")
    if any(not 0 <= v < data.p for v in parents) or not 0 <= j < data.p:
        raise ScoringError("node index out of range")
    if len(parents) >= n_min:
        raise TooManyParents(f"{len(parents)} parents but only {n_min} samples")


def ols_rss(data: MultiDataset, k: int, j: int, parents: Iterable[int]) -> float:
    """Unclamped minimal residual sum of squares of column ``j`` on ``parents`` in class ``k``."""
    parents = _canon(parents)
    _check_parents(data, j, parents, int(data.n_k[k]))
    return max(_rss_from_gram(data.grams[k], j, parents), 0.0)


def _floor(data: MultiDataset, G: np.ndarray, j: int, rel: float) -> float:
    return rel * max(float(G[j, j]), 1e-300)


class Scorer:
    """Local scores for one dataset and config, with residual caching.

    ``interventional=True`` uses the pooled interventional score whenever the
    dataset carries an :class:`InterventionSpec` with at least one target. An
    all-empty spec scores like purely observational classes.
    """

    def __init__(self, data: MultiDataset, cfg: ScoreConfig, interventional: bool = False,
                 cache: ScoreCache | None = None, use_cache: bool = True):
        self.data = data
        self.cfg = cfg
        self.lam = cfg.penalty(data)
        spec = data.interventions
        self.interventional = interventional and spec is not None and not spec.is_empty()
        self.cache = cache if cache is not None else ScoreCache()
        self.use_cache = use_cache
        self._local: dict = {}
        if self.interventional:
            spec = data.interventions
            self._obs = [tuple(k for k in range(data.K) if j not in spec.targets[k]) for j in range(data.p)]
            self._pooled = {}

    def rss(self, k: int, j: int, parents: tuple) -> float:
        """Clamped residual sum for class ``k``."""
        return float(self.rss_all(j, parents)[k])

    def rss_all(self, j: int, parents: tuple) -> np.ndarray:
        d = self.data
        if self.use_cache:
            vals = [self.cache.get((k, j, parents)) for k in range(d.K)]
            if all(v is not None for v in vals):
                return np.array(vals)
        _check_parents(d, j, parents, int(d.n_k.min()))
        raw = _rss_stack(d.gram_stack, j, parents)
        floor = self.cfg.rss_floor * np.maximum(d.gram_stack[:, j, j], 1e-300)
        vals = np.maximum(raw, floor)
        if self.use_cache:
            for k in range(d.K):
                self.cache.put((k, j, parents), float(vals[k]))
        return vals

    def pooled_rss(self, j: int, parents: tuple) -> float:
        """Residual of one coefficient vector shared by all classes not intervening on ``j``."""
        ks = self._obs[j]
        key = ("pooled", j, parents)
        if self.use_cache:
            val = self.cache.get(key)
            if val is not None:
                return val
        G = self._pooled.get(ks)
        if G is None:
            G = sum(self.data.grams[k] for k in ks)
            self._pooled[ks] = G
        n_min = int(sum(self.data.n_k[k] for k in ks))
        _check_parents(self.data, j, parents, n_min)
        val = max(_rss_from_gram(G, j, parents), _floor(self.data, G, j, self.cfg.rss_floor))
        if self.use_cache:
            self.cache.put(key, val)
        return val

    def local(self, j: int, parents: Iterable[int]) -> float:
        parents = _canon(parents)
        key = (j, parents)
        if self.use_cache:
            val = self._local.get(key)
            if val is not None:
                return val
        if self.interventional:
            val = self._interventional_local(j, parents)
        else:
            d = self.data
            val = -(float(d.weights @ np.log(self.rss_all(j, parents) / d.n_k)) + self.lam * len(parents))
        if self.use_cache:
            self._local[key] = val
        return val

    def _interventional_local(self, j: int, parents: tuple) -> float:
        d = self.data
        ks = self._obs[j]
        total = 0.0
        for k in range(d.K):
            if k not in ks:
                G = d.grams[k]
                marg = max(float(G[j, j]), _floor(d, G, j, self.cfg.rss_floor))
                total += float(d.weights[k]) * math.log(marg / float(d.n_k[k]))
        if not ks:
            return -total
        n_obs = float(sum(d.n_k[k] for k in ks))
        total += (n_obs / d.n) * math.log(self.pooled_rss(j, parents) / n_obs)
        return -(total + self.lam * len(parents))

    def graph_score(self, g: Dag) -> float:
        bound = self.cfg.degree_bound(g.p)
        pas = g.parent_sets()
        if any(len(pa) > bound for pa in pas):
            raise DegreeExceeded(f"in-degree exceeds {bound}")
        return float(sum(self.local(j, pa) for j, pa in enumerate(pas)))


def local_score(data: MultiDataset, j: int, parents: Iterable[int], cfg: ScoreConfig) -> float:
    return Scorer(data, cfg, use_cache=False).local(j, parents)


def interventional_local_score(data: MultiDataset, j: int, parents: Iterable[int], cfg: ScoreConfig) -> float:
    if data.interventions is None or data.interventions.is_empty():
        return local_score(data, j, parents, cfg)
    return Scorer(data, cfg, interventional=True, use_cache=False).local(j, parents)


def graph_score(data: MultiDataset, g: Dag, cfg: ScoreConfig, interventional: bool = False) -> float:
    return Scorer(data, cfg, interventional=interventional).graph_score(g)


def sem_log_likelihood(X: np.ndarray, m: SemModel) -> float:
    """``-tr(S Theta) + log det Theta`` with ``S = X'X/n`` and ``Theta`` the SEM precision."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    B = np.eye(m.p) - m.A
    R = X @ B  # residuals eps = X (I - A)
    trace = float(np.sum(R**2 / m.omega) / n)
    return -trace - float(np.sum(np.log(m.omega)))
