import itertools as itr

import numpy as np
from hypothesis import strategies as st

from jointges.graph import Dag


@st.composite
def dags(draw, min_p=1, max_p=6, density=None):
    """Random DAG: random order, then independent edge draws along it."""
    p = draw(st.integers(min_p, max_p))
    order = draw(st.permutations(range(p)))
    edges = set()
    for a, b in itr.combinations(range(p), 2):
        if draw(st.booleans()) if density is None else draw(st.floats(0, 1)) < density:
            edges.add((order[a], order[b]))
    return Dag(p, frozenset(edges))


def random_dag(rng: np.random.Generator, p: int, prob: float = 0.5) -> Dag:
    order = rng.permutation(p)
    edges = {(int(order[a]), int(order[b])) for a, b in itr.combinations(range(p), 2) if rng.random() < prob}
    return Dag(p, frozenset(edges))


def _ancestors(d: Dag, nodes: set) -> set:
    out, stack = set(nodes), list(nodes)
    pas = d.parent_sets()
    while stack:
        v = stack.pop()
        for u in pas[v]:
            if u not in out:
                out.add(u)
                stack.append(u)
    return out


def d_separated(d: Dag, x: int, y: int, S: set) -> bool:
    """Moralised-ancestral-graph criterion, written independently of the library."""
    keep = _ancestors(d, {x, y} | set(S))
    adj = {v: set() for v in keep}
    pas = d.parent_sets()
    for v in keep:
        ps = [u for u in pas[v] if u in keep]
        for u in ps:
            adj[u].add(v)
            adj[v].add(u)
        for a, b in itr.combinations(ps, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen, stack = {x}, [x]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w == y:
                return False
            if w in seen or w in S:
                continue
            seen.add(w)
            stack.append(w)
    return True


def dsep_signature(d: Dag) -> frozenset:
    out = set()
    nodes = range(d.p)
    for x, y in itr.combinations(nodes, 2):
        rest = [v for v in nodes if v not in (x, y)]
        for r in range(len(rest) + 1):
            for S in itr.combinations(rest, r):
                if d_separated(d, x, y, set(S)):
                    out.add((x, y, S))
    return frozenset(out)
