"""Greedy equivalence search over CPDAGs with a decomposable score.

Forward phase applies the best ``Insert(x, y, T)`` until no insertion helps,
then the backward phase applies ``Delete(x, y, H)`` likewise. Operator
validity uses the standard conditions: the clique condition on ``NA_yx + T``
(resp. ``NA_yx - H``) and, for insertions, that every semi-directed path
from ``y`` to ``x`` is blocked by ``NA_yx + T``.
"""

from __future__ import annotations

import itertools as itr
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

from .graph import (
    Dag,
    Pdag,
    _cpdag_from_dag_mixed,
    _extend_mixed,
    _Mixed,
    all_dags,
    complete_to_cpdag,
    consistent_extension,
    enumerate_class,
)
from .scoring import MultiDataset, ScoreConfig, Scorer

log = logging.getLogger(__name__)


class SearchError(RuntimeError):
    pass


class TooLarge(SearchError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    max_in_degree: int | None = None
    iterate: bool = False
    epsilon_improve: float = 1e-9
    max_moves: int = 100_000
    orient_cap: int = 5000

    def __post_init__(self):
        if self.epsilon_improve < 0:
            raise ValueError("epsilon_improve must be non-negative")
        if self.max_moves < 1:
            raise ValueError("max_moves must be at least 1")


@dataclass(frozen=True)
class Move:
    kind: str
    x: int
    y: int
    subset: tuple
    score_before: float
    score_after: float

    @property
    def delta(self) -> float:
        return self.score_after - self.score_before


@dataclass
class SearchTrace:
    moves: list = field(default_factory=list)
    initial_score: float = 0.0
    hit_move_limit: bool = False

    @property
    def final_score(self) -> float:
        return self.moves[-1].score_after if self.moves else self.initial_score

    def __len__(self) -> int:
        return len(self.moves)

    def to_jsonl(self) -> str:
        lines = []
        for m in self.moves:
            rec = asdict(m)
            rec["subset"] = list(m.subset)
            rec["delta"] = m.delta
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itr.combinations(items, r)


def _is_clique(g: _Mixed, nodes) -> bool:
    nodes = list(nodes)
    for a, b in itr.combinations(nodes, 2):
        if not g.adjacent(a, b):
            return False
    return True


def _semi_directed_blocked(g: _Mixed, src: int, dst: int, blocked: set) -> bool:
    """True when every semi-directed path ``src ~> dst`` passes through ``blocked``."""
    seen = {src}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for w in itr.chain(g.ch[v], g.ne[v]):
            if w == dst:
                return False
            if w in seen or w in blocked:
                continue
            seen.add(w)
            queue.append(w)
    return True


class _GES:
    def __init__(self, scorer: Scorer, cfg: SearchConfig, bound: int):
        self.s = scorer
        self.cfg = cfg
        self.bound = bound
        self.p = scorer.data.p
        self.g = _Mixed(self.p)
        self.trace = SearchTrace()
        self.score = sum(scorer.local(j, ()) for j in range(self.p))
        self.trace.initial_score = self.score

    # -- candidate generation -------------------------------------------------

    def _fwd_for(self, y: int, x: int) -> list:
        g = self.g
        if x == y or g.adjacent(x, y):
            return []
        adj_x = g.adj(x)
        ne_y = g.ne[y]
        na = ne_y & adj_x
        base = g.pa[y] | na
        out = []
        local = self.s.local
        eps = self.cfg.epsilon_improve
        for T in _subsets(sorted(ne_y - adj_x)):
            S = base.union(T)
            if len(S) + 1 > self.bound:
                break
            if not _is_clique(g, na.union(T)):
                continue
            delta = local(y, S | {x}) - local(y, S)
            if delta >= eps:
                out.append((-delta, x, y, T, "insert"))
        return out

    def _bwd_for(self, y: int, x: int) -> list:
        g = self.g
        if x not in g.pa[y] and x not in g.ne[y]:
            return []
        na = g.ne[y] & g.adj(x)
        out = []
        local = self.s.local
        eps = self.cfg.epsilon_improve
        pa_y = g.pa[y] - {x}
        for H in _subsets(sorted(na)):
            keep = na.difference(H)
            if not _is_clique(g, keep):
                continue
            S = pa_y | keep
            delta = local(y, S) - local(y, S | {x})
            if delta >= eps:
                out.append((-delta, x, y, H, "delete"))
        return out

    def _build(self, fn) -> list:
        return [{x: fn(y, x) for x in range(self.p)} for y in range(self.p)]

    def _refresh(self, table, fn, dirty_nodes, endpoints) -> None:
        for y in range(self.p):
            if y in dirty_nodes:
                table[y] = {x: fn(y, x) for x in range(self.p)}
            else:
                for x in endpoints:
                    table[y][x] = fn(y, x)

    # -- validity at selection time ---------------------------------------------

    def _valid(self, kind: str, x: int, y: int, subset: tuple) -> bool:
        g = self.g
        if kind == "insert":
            na = g.ne[y] & g.adj(x)
            blocked = na | set(subset)
            return _semi_directed_blocked(g, y, x, blocked)
        return True

    def _apply(self, kind: str, x: int, y: int, subset: tuple) -> _Mixed:
        g = self.g.copy()
        if kind == "insert":
            g.add_directed(x, y)
            for t in subset:
                g.orient(t, y)
        else:
            g.remove(x, y)
            for h in subset:
                if h in g.ne[y]:
                    g.orient(y, h)
                if h in g.ne[x]:
                    g.orient(x, h)
        dag = _extend_mixed(g).to_dag()
        return _cpdag_from_dag_mixed(dag)

    def _degree_ok(self, g: _Mixed) -> bool:
        if self.bound >= self.p - 1:
            return True
        return all(len(g.pa[v]) + len(g.ne[v]) <= self.bound for v in range(self.p))

    # -- phases -----------------------------------------------------------------

    def _phase(self, fn) -> int:
        table = self._build(fn)
        accepted = 0
        while True:
            if len(self.trace.moves) >= self.cfg.max_moves:
                self.trace.hit_move_limit = True
                log.warning("GES stopped at max_moves=%d", self.cfg.max_moves)
                return accepted
            cands = [c for row in table for lst in row.values() for c in lst]
            cands.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
            chosen = None
            for neg, x, y, subset, kind in cands:
                if not self._valid(kind, x, y, subset):
                    continue
                new_g = self._apply(kind, x, y, subset)
                if kind == "insert" and not self._degree_ok(new_g):
                    continue
                chosen = (neg, x, y, subset, kind, new_g)
                break
            if chosen is None:
                return accepted
            neg, x, y, subset, kind, new_g = chosen
            old = self.g
            before = self.score
            self.score = before - neg
            self.trace.moves.append(Move(kind, x, y, tuple(subset), before, self.score))
            self.g = new_g
            accepted += 1
            dirty = {v for v in range(self.p) if old.pa[v] != new_g.pa[v] or old.ne[v] != new_g.ne[v]}
            dirty |= {x, y}
            self._refresh(table, fn, dirty, (x, y))

    def run(self) -> Pdag:
        while True:
            n_fwd = self._phase(self._fwd_for)
            n_bwd = self._phase(self._bwd_for)
            if not self.cfg.iterate or n_bwd == 0 or self.trace.hit_move_limit:
                break
            if n_fwd == 0 and n_bwd == 0:
                break
        return self.g.to_pdag()


def _bound(scfg: ScoreConfig, cfg: SearchConfig, p: int) -> int:
    d = cfg.max_in_degree if cfg.max_in_degree is not None else scfg.max_in_degree
    return p - 1 if d is None else min(int(d), p - 1)


def ges_fit(data: MultiDataset, scfg: ScoreConfig, cfg: SearchConfig | None = None,
            scorer: Scorer | None = None) -> tuple[Pdag, SearchTrace]:
    """Greedy equivalence search starting from the empty graph."""
    cfg = cfg or SearchConfig()
    scorer = scorer or Scorer(data, scfg)
    ges = _GES(scorer, cfg, _bound(scfg, cfg, data.p))
    return ges.run(), ges.trace


def separate_fit(data: MultiDataset, scfg: ScoreConfig, cfg: SearchConfig | None = None) -> list:
    """Independent GES per class; a ``scaling_c`` penalty uses each class's own ``n_k``."""
    return [ges_fit(data.single_class(k).with_interventions(None), scfg, cfg) for k in range(data.K)]


def best_member(g: Pdag, scorer: Scorer, cap: int = 5000) -> tuple[Dag, list]:
    """Highest-scoring DAG in the class of ``g`` and the list of all (near-)maximizers."""
    members, truncated = enumerate_class(g, cap)
    if truncated:
        log.warning("equivalence class truncated at %d members when orienting", cap)
    if not members:
        return consistent_extension(g), []
    scored = [(scorer.graph_score(d), d) for d in members]
    top = max(s for s, _ in scored)
    tol = 1e-9 * max(1.0, abs(top))
    winners = [d for s, d in scored if s >= top - tol]
    return winners[0], winners


def gies_fit(data: MultiDataset, scfg: ScoreConfig, cfg: SearchConfig | None = None) -> tuple[Pdag, SearchTrace]:
    """GES with the pooled interventional score, followed by interventional orientation.

    The greedy phases move through observational CPDAGs. Afterwards every
    member of the final class is scored with the interventional score; edges
    that point the same way in all top-scoring members are returned directed.
    """
    cfg = cfg or SearchConfig()
    if data.interventions is None or data.interventions.is_empty():
        return ges_fit(data.with_interventions(None), scfg, cfg)
    scorer = Scorer(data, scfg, interventional=True)
    cpdag, trace = ges_fit(data, scfg, cfg, scorer=scorer)
    _, winners = best_member(cpdag, scorer, cfg.orient_cap)
    if not winners:
        return cpdag, trace
    shared = frozenset.intersection(*(w.edges for w in winners))
    undirected = cpdag.skeleton() - frozenset((min(e), max(e)) for e in shared)
    return Pdag(cpdag.p, shared, undirected), trace


def _edge_key(d: Dag):
    return (len(d.edges), sorted(d.edges))


def exhaustive_best_dag(data: MultiDataset, scfg: ScoreConfig, interventional: bool = False) -> Dag:
    """Brute-force maximizer of the graph score over all DAGs (p <= 5)."""
    if data.p > 5:
        raise TooLarge(f"exhaustive search limited to p <= 5, got p={data.p}")
    scorer = Scorer(data, scfg, interventional=interventional)
    bound = scfg.degree_bound(data.p)
    best, best_score = None, -float("inf")
    for d in all_dags(data.p):
        if any(k > bound for k in d.in_degrees()):
            continue
        s = scorer.graph_score(d)
        if best is None or s > best_score + 1e-12 or (abs(s - best_score) <= 1e-12 and _edge_key(d) < _edge_key(best)):
            best, best_score = d, s
    return best


