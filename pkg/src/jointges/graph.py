"""Directed and partially directed graphs over nodes ``0..p-1``.

Edges are stored as frozensets of integer pairs. ``Dag.edges`` holds ordered
pairs ``(i, j)`` meaning ``i -> j``; ``Pdag.undirected`` holds pairs with
``i < j``.
"""

from __future__ import annotations

import heapq
import itertools as itr
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    pass


class CycleDetected(GraphError):
    pass


class NoExtension(GraphError):
    pass


class SizeMismatch(GraphError):
    pass


class UnionCyclic(GraphError):
    pass


def _upair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Permutation:
    """A node ordering. ``order[0]`` is the first (most upstream) node."""

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"not a permutation of 0..{len(self.order) - 1}: {self.order}")

    @property
    def position(self) -> tuple[int, ...]:
        pos = [0] * len(self.order)
        for rank, node in enumerate(self.order):
            pos[node] = rank
        return tuple(pos)

    def is_consistent(self, dag: "Dag") -> bool:
        pos = self.position
        return all(pos[i] < pos[j] for i, j in dag.edges)


@dataclass(frozen=True)
class Dag:
    p: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise GraphError(f"edge {(i, j)} out of range for p={self.p}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if (j, i) in edges:
                raise GraphError(f"both {(i, j)} and {(j, i)} present")
        if _find_cycle(self.p, edges) is not None:
            raise CycleDetected(f"edges contain a directed cycle")

    @classmethod
    def from_matrix(cls, A: np.ndarray, tol: float = 0.0) -> "Dag":
        A = np.asarray(A)
        rows, cols = np.nonzero(np.abs(A) > tol)
        return cls(A.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def to_matrix(self) -> np.ndarray:
        B = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            B[i, j] = True
        return B

    def parents(self, j: int) -> frozenset:
        return frozenset(i for i, k in self.edges if k == j)

    def parent_sets(self) -> list[frozenset]:
        pa = [set() for _ in range(self.p)]
        for i, j in self.edges:
            pa[j].add(i)
        return [frozenset(s) for s in pa]

    def in_degrees(self) -> list[int]:
        deg = [0] * self.p
        for _, j in self.edges:
            deg[j] += 1
        return deg

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Pdag:
    p: int
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        d = frozenset((int(i), int(j)) for i, j in self.directed)
        u = frozenset(_upair(int(i), int(j)) for i, j in self.undirected)
        object.__setattr__(self, "directed", d)
        object.__setattr__(self, "undirected", u)
        for i, j in itr.chain(d, u):
            if not (0 <= i < self.p and 0 <= j < self.p) or i == j:
                raise GraphError(f"bad edge {(i, j)} for p={self.p}")
        dpairs = {_upair(i, j) for i, j in d}
        if len(dpairs) != len(d):
            raise GraphError("directed edges in both directions on one pair")
        if dpairs & u:
            raise GraphError("pair is both directed and undirected")

    @classmethod
    def from_dag(cls, dag: Dag) -> "Pdag":
        return cls(dag.p, dag.edges, frozenset())

    def skeleton(self) -> frozenset:
        return frozenset(_upair(i, j) for i, j in self.directed) | self.undirected

    def __len__(self) -> int:
        return len(self.directed) + len(self.undirected)


# ---------------------------------------------------------------------------
# mutable adjacency used by the algorithms below and by the search

class _Mixed:
    """Mutable mixed graph: ``pa``/``ch`` for directed edges, ``ne`` for undirected."""

    __slots__ = ("p", "pa", "ch", "ne")

    def __init__(self, p: int):
        self.p = p
        self.pa = [set() for _ in range(p)]
        self.ch = [set() for _ in range(p)]
        self.ne = [set() for _ in range(p)]

    @classmethod
    def from_graph(cls, g: Dag | Pdag) -> "_Mixed":
        m = cls(g.p)
        if isinstance(g, Dag):
            directed, undirected = g.edges, ()
        else:
            directed, undirected = g.directed, g.undirected
        for i, j in directed:
            m.pa[j].add(i)
            m.ch[i].add(j)
        for i, j in undirected:
            m.ne[i].add(j)
            m.ne[j].add(i)
        return m

    def copy(self) -> "_Mixed":
        m = _Mixed(self.p)
        m.pa = [set(s) for s in self.pa]
        m.ch = [set(s) for s in self.ch]
        m.ne = [set(s) for s in self.ne]
        return m

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.pa[i] or j in self.ch[i] or j in self.ne[i]

    def adj(self, i: int) -> set:
        return self.pa[i] | self.ch[i] | self.ne[i]

    def orient(self, i: int, j: int) -> None:
        """Turn ``i - j`` into ``i -> j``."""
        self.ne[i].discard(j)
        self.ne[j].discard(i)
        self.pa[j].add(i)
        self.ch[i].add(j)

    def add_directed(self, i: int, j: int) -> None:
        self.pa[j].add(i)
        self.ch[i].add(j)

    def add_undirected(self, i: int, j: int) -> None:
        self.ne[i].add(j)
        self.ne[j].add(i)

    def remove(self, i: int, j: int) -> None:
        for a, b in ((i, j), (j, i)):
            self.pa[a].discard(b)
            self.ch[a].discard(b)
            self.ne[a].discard(b)

    def to_pdag(self) -> Pdag:
        directed = frozenset((i, j) for j in range(self.p) for i in self.pa[j])
        undirected = frozenset((i, j) for i in range(self.p) for j in self.ne[i] if i < j)
        return Pdag(self.p, directed, undirected)

    def to_dag(self) -> Dag:
        if any(self.ne):
            raise GraphError("graph still has undirected edges")
        return Dag(self.p, frozenset((i, j) for j in range(self.p) for i in self.pa[j]))


def _find_cycle(p: int, edges: Iterable[tuple[int, int]]):
    children = [[] for _ in range(p)]
    indeg = [0] * p
    for i, j in edges:
        children[i].append(j)
        indeg[j] += 1
    queue = deque(v for v in range(p) if indeg[v] == 0)
    seen = 0
    while queue:
        v = queue.popleft()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen == p:
        return None
    return [v for v in range(p) if indeg[v] > 0]


# ---------------------------------------------------------------------------
# operations

def topological_order(d: Dag) -> Permutation:
    """Kahn's algorithm, always releasing the smallest available node first."""
    indeg = d.in_degrees()
    children = [[] for _ in range(d.p)]
    for i, j in d.edges:
        children[i].append(j)
    heap = [v for v in range(d.p) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != d.p:
        raise CycleDetected("graph has a directed cycle")
    return Permutation(tuple(order))


def skeleton(g: Dag | Pdag) -> frozenset:
    if isinstance(g, Dag):
        return frozenset(_upair(i, j) for i, j in g.edges)
    return g.skeleton()


def v_structures(d: Dag) -> frozenset:
    """Triples ``(a, c, b)`` with ``a -> c <- b``, ``a < b`` and ``a``, ``b`` non-adjacent."""
    skel = skeleton(d)
    out = set()
    for c, pas in enumerate(d.parent_sets()):
        for a, b in itr.combinations(sorted(pas), 2):
            if (a, b) not in skel:
                out.add((a, c, b))
    return frozenset(out)


def skeleton_vstructures(d: Dag) -> tuple[frozenset, frozenset]:
    return skeleton(d), v_structures(d)


def markov_equivalent(a: Dag, b: Dag) -> bool:
    return a.p == b.p and skeleton_vstructures(a) == skeleton_vstructures(b)


def _orientation_closure(g: _Mixed) -> None:
    """Apply orientation rules R1-R4 in place until no rule fires."""
    p = g.p
    changed = True
    while changed:
        changed = False
        for a in range(p):
            for b in sorted(g.ne[a]):
                if b not in g.ne[a]:
                    continue
                if _rule_orients(g, a, b):
                    g.orient(a, b)
                    changed = True


def _rule_orients(g: _Mixed, a: int, b: int) -> bool:
    # R1: c -> a - b, c and b non-adjacent
    for c in g.pa[a]:
        if not g.adjacent(c, b):
            return True
    # R2: a -> c -> b
    if g.ch[a] & g.pa[b]:
        return True
    # R3: a - c -> b, a - d -> b, c and d non-adjacent
    cands = sorted(g.ne[a] & g.pa[b])
    for c, d in itr.combinations(cands, 2):
        if not g.adjacent(c, d):
            return True
    # R4: a - c -> d -> b with c, b non-adjacent and a adjacent to d
    for d in g.pa[b]:
        if not g.adjacent(a, d):
            continue
        for c in g.pa[d]:
            if c in g.ne[a] and not g.adjacent(c, b):
                return True
    return False


def _cpdag_from_dag_mixed(d: Dag) -> _Mixed:
    g = _Mixed(d.p)
    vs = v_structures(d)
    compelled = set()
    for a, c, b in vs:
        compelled.add((a, c))
        compelled.add((b, c))
    for i, j in d.edges:
        if (i, j) in compelled:
            g.add_directed(i, j)
        else:
            g.add_undirected(i, j)
    _orientation_closure(g)
    return g


def complete_to_cpdag(d: Dag) -> Pdag:
    """Essential graph of the Markov equivalence class of ``d``."""
    return _cpdag_from_dag_mixed(d).to_pdag()


def _extend_mixed(g: _Mixed) -> _Mixed:
    """Dor-Tarsi sink elimination on a copy of ``g``; returns a fully directed graph.

    Among admissible sinks the largest index is removed first, so lower-index
    nodes end up upstream.
    """
    work = g.copy()
    out = g.copy()
    alive = set(range(g.p))
    while alive:
        chosen = None
        for x in sorted(alive, reverse=True):
            if work.ch[x]:
                continue
            nbrs = work.ne[x]
            adj_x = work.adj(x)
            if all(adj_x - {y} <= work.adj(y) for y in nbrs):
                chosen = x
                break
        if chosen is None:
            raise NoExtension("PDAG admits no consistent extension")
        x = chosen
        for y in list(work.ne[x]):
            out.orient(y, x)
        for y in list(work.adj(x)):
            work.remove(x, y)
        alive.remove(x)
    return out


def consistent_extension(g: Pdag) -> Dag:
    if not g.undirected:
        if _find_cycle(g.p, g.directed) is not None:
            raise NoExtension("directed part has a cycle")
        return Dag(g.p, g.directed)
    return _extend_mixed(_Mixed.from_graph(g)).to_dag()


def pdag_to_cpdag(g: Pdag) -> Pdag:
    """CPDAG of the class represented by a (consistently extendable) PDAG."""
    return complete_to_cpdag(consistent_extension(g))


def is_cpdag(g: Pdag) -> bool:
    try:
        return pdag_to_cpdag(g) == g
    except (NoExtension, CycleDetected):
        return False


def enumerate_class(g: Pdag, cap: int | None = None) -> tuple[list[Dag], bool]:
    """All DAGs in the Markov equivalence class of CPDAG ``g``.

    Returns ``(dags, truncated)``; the list stops at ``cap`` members.
    """
    out: list[Dag] = []
    target_vs = None
    truncated = False

    def recurse(m: _Mixed) -> bool:
        nonlocal truncated, target_vs
        und = [(i, j) for i in range(m.p) for j in sorted(m.ne[i]) if i < j]
        if not und:
            dag_edges = frozenset((i, j) for j in range(m.p) for i in m.pa[j])
            if _find_cycle(m.p, dag_edges) is not None:
                return True
            d = Dag(m.p, dag_edges)
            if target_vs is not None and v_structures(d) != target_vs:
                return True
            if cap is not None and len(out) >= cap:
                truncated = True
                return False
            out.append(d)
            return True
        i, j = und[0]
        for a, b in ((i, j), (j, i)):
            child = m.copy()
            child.orient(a, b)
            _orientation_closure(child)
            if not recurse(child):
                return False
        return True

    m0 = _Mixed.from_graph(g)
    if g.undirected or g.directed:
        try:
            target_vs = v_structures(consistent_extension(g))
        except NoExtension:
            return [], False
    recurse(m0)
    return out, truncated


def shd(a: Dag | Pdag, b: Dag | Pdag) -> int:
    """Structural Hamming distance: number of node pairs whose edge state differs."""
    if a.p != b.p:
        raise SizeMismatch(f"graphs have p={a.p} and p={b.p}")
    sa, sb = _pair_states(a), _pair_states(b)
    return sum(1 for k in sa.keys() | sb.keys() if sa.get(k) != sb.get(k))


def _pair_states(g: Dag | Pdag) -> dict:
    directed = g.edges if isinstance(g, Dag) else g.directed
    states = {}
    for i, j in directed:
        states[_upair(i, j)] = (i, j)
    if isinstance(g, Pdag):
        for pair in g.undirected:
            states[pair] = "-"
    return states


def union_graph(ds: Iterable[Dag]) -> Dag:
    ds = list(ds)
    if not ds:
        raise ValueError("need at least one DAG")
    p = ds[0].p
    if any(d.p != p for d in ds):
        raise SizeMismatch("DAGs differ in node count")
    edges = frozenset().union(*(d.edges for d in ds))
    if any((j, i) in edges for i, j in edges) or _find_cycle(p, edges) is not None:
        raise UnionCyclic("union of DAGs is not acyclic")
    return Dag(p, edges)


def all_dags(p: int):
    """Yield every DAG on ``p`` labelled nodes (25 for p=3, 29281 for p=5)."""
    pairs = list(itr.combinations(range(p), 2))
    for states in itr.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (i, j), s in zip(pairs, states):
            if s == 1:
                edges.append((i, j))
            elif s == 2:
                edges.append((j, i))
        if _find_cycle(p, edges) is None:
            yield Dag(p, frozenset(edges))
