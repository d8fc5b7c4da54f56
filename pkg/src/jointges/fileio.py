"""Text formats: edge lists, SEM files, sample CSVs and intervention lists.

Edge list: first line ``p=<count>``, then ``i<TAB>j[<TAB>weight]`` per edge
with 0-based indices. An undirected edge is written as both directions.
SEM files append one ``omega=v0,v1,...`` line.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .graph import Dag, Pdag
from .sem import InterventionSpec, SemModel


class FormatError(ValueError):
    pass


def _num(v: float) -> str:
    return repr(float(v))


def dump_graph(g: Dag | Pdag, weights: np.ndarray | None = None) -> str:
    lines = [f"p={g.p}"]
    if isinstance(g, Pdag):
        arcs = set(g.directed)
        for i, j in g.undirected:
            arcs |= {(i, j), (j, i)}
    else:
        arcs = set(g.edges)
    for i, j in sorted(arcs):
        if weights is None:
            lines.append(f"{i}\t{j}")
        else:
            lines.append(f"{i}\t{j}\t{_num(weights[i, j])}")
    return "\n".join(lines) + "\n"


def dump_sem(m: SemModel) -> str:
    return dump_graph(m.dag, m.A) + "omega=" + ",".join(_num(v) for v in m.omega) + "\n"


def _parse(text: str):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("p="):
        raise FormatError("edge list must start with a 'p=<count>' line")
    try:
        p = int(lines[0][2:])
    except ValueError as exc:
        raise FormatError(f"bad node count line {lines[0]!r}") from exc
    arcs, omega = {}, None
    for ln in lines[1:]:
        if ln.startswith("omega="):
            try:
                omega = np.array([float(v) for v in ln[6:].split(",")])
            except ValueError as exc:
                raise FormatError(f"bad omega line {ln!r}") from exc
            continue
        parts = ln.split("\t")
        if len(parts) not in (2, 3):
            raise FormatError(f"bad edge line {ln!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else None
        except ValueError as exc:
            raise FormatError(f"bad edge line {ln!r}") from exc
        if not (0 <= i < p and 0 <= j < p) or i == j:
            raise FormatError(f"edge {i}->{j} out of range for p={p}")
        arcs[(i, j)] = w
    return p, arcs, omega


def load_graph(text: str) -> Dag | Pdag:
    """A ``Dag`` when no edge appears in both directions, else a ``Pdag``."""
    p, arcs, _ = _parse(text)
    und = {(min(i, j), max(i, j)) for i, j in arcs if (j, i) in arcs}
    if not und:
        return Dag(p, frozenset(arcs))
    directed = frozenset(e for e in arcs if (min(e), max(e)) not in und)
    return Pdag(p, directed, frozenset(und))


def load_sem(text: str) -> SemModel:
    p, arcs, omega = _parse(text)
    if omega is None or omega.size != p:
        raise FormatError("SEM file needs an omega line with p values")
    A = np.zeros((p, p))
    for (i, j), w in arcs.items():
        if w is None:
            raise FormatError(f"SEM edge {i}->{j} has no weight")
        A[i, j] = w
    return SemModel(A, omega)


def dump_samples(X: np.ndarray, names: list[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names or [f"X{j}" for j in range(X.shape[1])])
    for row in X:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def load_samples(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("empty CSV")
    header = rows[0]
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise FormatError("CSV needs a header row of node names")
    body = [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise FormatError("CSV rows have inconsistent widths")
    try:
        X = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV entry: {exc}") from exc
    return header, X


def load_interventions(text: str) -> InterventionSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"intervention file is not valid JSON: {exc}") from exc
    if not isinstance(raw, list) or not all(isinstance(t, list) for t in raw):
        raise FormatError("intervention file must be a JSON array of arrays")
    if not all(isinstance(v, int) and not isinstance(v, bool) for t in raw for v in t):
        raise FormatError("intervention targets must be integer node indices")
    return InterventionSpec(tuple(frozenset(t) for t in raw))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
