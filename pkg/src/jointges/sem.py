"""Linear Gaussian structural equation models ``X = A'X + eps``."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .graph import Dag, GraphError, Permutation, topological_order


class SemError(ValueError):
    pass


class NumericalFailure(SemError):
    pass


class NotPositiveDefinite(SemError):
    pass


class ConfigInfeasible(SemError):
    pass


class BadTarget(SemError):
    pass


@dataclass(frozen=True, eq=False)
class SemModel:
    """Edge weights ``A`` (``A[i, j] != 0`` iff ``i -> j``) and noise variances ``omega``."""

    A: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        omega = np.array(self.omega, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != omega.shape[0]:
            raise SemError(f"shape mismatch: A {A.shape}, omega {omega.shape}")
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise SemError("noise variances must be finite and positive")
        if not np.all(np.isfinite(A)):
            raise SemError("edge weights must be finite")
        try:
            Dag.from_matrix(A)
        except GraphError as exc:
            raise SemError(f"edge support is not a DAG: {exc}") from exc
        A.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "omega", omega)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def dag(self) -> Dag:
        return Dag.from_matrix(self.A)


@dataclass(frozen=True, eq=False)
class CovariancePair:
    sigma: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class InterventionSpec:
    """Per-class intervention targets; an empty set marks an observational class."""

    targets: tuple

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(frozenset(int(v) for v in t) for t in self.targets))

    @property
    def K(self) -> int:
        return len(self.targets)

    def validate(self, p: int) -> None:
        for k, t in enumerate(self.targets):
            bad = [v for v in t if not 0 <= v < p]
            if bad:
                raise BadTarget(f"class {k}: targets {bad} out of range for p={p}")

    def is_empty(self) -> bool:
        return not any(self.targets)


@dataclass(frozen=True)
class JointModelConfig:
    """Simulation protocol for a collection of related DAG models.

    Defaults reproduce the synthetic setup with p=100 and K=3: an Erdos-Renyi
    core with 100 expected edges plus 30 class-specific edges per DAG.
    """

    p: int = 100
    K: int = 3
    core_edges: float = 100
    extra_edges: int = 30
    weight_range: tuple = ((-1.0, -0.1), (0.1, 1.0))
    variance_range: tuple = (1.0, 2.25)
    seed: int = 0
    lock_shared_weights: bool = False

    def __post_init__(self):
        wr = tuple(tuple(float(v) for v in iv) for iv in self.weight_range)
        object.__setattr__(self, "weight_range", wr)
        object.__setattr__(self, "variance_range", tuple(float(v) for v in self.variance_range))
        if self.p < 1 or self.K < 1:
            raise SemError("p and K must be positive")
        if self.core_edges < 0 or self.extra_edges < 0:
            raise SemError("edge counts must be non-negative")
        if self.core_edges > self.p * (self.p - 1) / 2:
            raise SemError("core_edges exceeds the number of node pairs")
        if not wr or any(len(iv) != 2 or iv[0] >= iv[1] for iv in wr):
            raise SemError("weight_range must be a list of (low, high) intervals")
        lo, hi = self.variance_range
        if not 0 < lo <= hi:
            raise SemError("variance_range must satisfy 0 < low <= high")

    @classmethod
    def from_dict(cls, d: Mapping) -> "JointModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SemError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def precision_from_sem(m: SemModel) -> CovariancePair:
    B = np.eye(m.p) - m.A
    theta = (B / m.omega) @ B.T
    theta = 0.5 * (theta + theta.T)
    # (I - A) is unit triangular up to permutation, so its inverse is exact enough
    try:
        Binv = scipy.linalg.solve(B, np.eye(m.p))
    except (np.linalg.LinAlgError, ValueError) as exc:  # pragma: no cover
        raise NumericalFailure(str(exc)) from exc
    sigma = (Binv.T * m.omega) @ Binv
    sigma = 0.5 * (sigma + sigma.T)
    return CovariancePair(sigma=sigma, theta=theta)


def cholesky_sem(theta: np.ndarray, pi: Permutation | Sequence[int]) -> SemModel:
    """SEM parameters ``(A_pi, Omega_pi)`` of ``theta`` under the node order ``pi``.

    Writes the reordered precision as ``U D U'`` with ``U`` unit upper
    triangular; then ``A = I - U`` and ``omega = 1 / diag(D)``.
    """
    order = np.asarray(pi.order if isinstance(pi, Permutation) else pi, dtype=int)
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    if not np.allclose(theta, theta.T, atol=1e-10 * max(1.0, np.abs(theta).max())):
        raise NotPositiveDefinite("theta is not symmetric")
    T = theta[np.ix_(order, order)]
    rev = T[::-1, ::-1]
    try:
        Lc = np.linalg.cholesky(rev)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    # rev = Lc Lc' with Lc lower; flipping back gives T = U D U'
    d = np.diag(Lc)
    Lunit = Lc / d
    U = Lunit[::-1, ::-1]
    Dg = (d**2)[::-1]
    A_perm = np.eye(p) - U
    A_perm[np.tril_indices(p)] = 0.0
    A = np.zeros((p, p))
    A[np.ix_(order, order)] = A_perm
    omega = np.empty(p)
    omega[order] = 1.0 / Dg
    return SemModel(A, omega)


def sample(m: SemModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from the SEM by forward substitution."""
    if n < 1:
        raise SemError("n must be positive")
    eps = rng.standard_normal((n, m.p)) * np.sqrt(m.omega)
    order = np.array(topological_order(m.dag).order, dtype=np.int64)
    return _kernels.forward_sample(eps, m.A, order)


def _draw_weights(rng: np.random.Generator, intervals, size: int) -> np.ndarray:
    lengths = np.array([hi - lo for lo, hi in intervals])
    which = rng.choice(len(intervals), size=size, p=lengths / lengths.sum())
    u = rng.random(size)
    lo = np.array([intervals[w][0] for w in which]) if size else np.zeros(0)
    return lo + u * lengths[which]


def random_joint_model(cfg: JointModelConfig, rng: np.random.Generator | None = None):
    """Sample K DAGs sharing an Erdos-Renyi core and one node ordering, plus their SEMs.

    Returns ``(dags, sems, permutation)``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    p, K = cfg.p, cfg.K
    perm = rng.permutation(p)
    pos = np.empty(p, dtype=int)
    pos[perm] = np.arange(p)

    # candidate slots in ordering-consistent orientation, in a fixed enumeration
    iu, ju = np.triu_indices(p, k=1)
    src = np.where(pos[iu] < pos[ju], iu, ju)
    dst = np.where(pos[iu] < pos[ju], ju, iu)
    n_pairs = src.size
    prob = cfg.core_edges / n_pairs if n_pairs else 0.0
    in_core = rng.random(n_pairs) < prob
    free = np.flatnonzero(~in_core)
    if cfg.extra_edges > free.size:
        raise ConfigInfeasible(
            f"extra_edges={cfg.extra_edges} exceeds {free.size} available non-edge slots"
        )

    core_idx = np.flatnonzero(in_core)
    shared_w = _draw_weights(rng, cfg.weight_range, core_idx.size)
    lo, hi = cfg.variance_range
    dags, sems = [], []
    for _ in range(K):
        extra_idx = rng.choice(free, size=cfg.extra_edges, replace=False) if cfg.extra_edges else np.zeros(0, int)
        A = np.zeros((p, p))
        if cfg.lock_shared_weights:
            A[src[core_idx], dst[core_idx]] = shared_w
        else:
            A[src[core_idx], dst[core_idx]] = _draw_weights(rng, cfg.weight_range, core_idx.size)
        A[src[extra_idx], dst[extra_idx]] = _draw_weights(rng, cfg.weight_range, extra_idx.size)
        omega = lo + (hi - lo) * rng.random(p)
        sem = SemModel(A, omega)
        sems.append(sem)
        dags.append(sem.dag)
    return dags, sems, Permutation(tuple(int(v) for v in perm))


def apply_intervention(m: SemModel, targets, new_variances: Mapping[int, float] | None = None) -> SemModel:
    """Perfect intervention: cut all edges into ``targets`` and reset their noise variances."""
    targets = frozenset(int(t) for t in targets)
    new_variances = dict(new_variances or {})
    bad = [t for t in targets if not 0 <= t < m.p]
    if bad:
        raise BadTarget(f"targets {bad} out of range")
    if set(new_variances) - targets:
        raise BadTarget("new_variances keyed by non-target nodes")
    if new_variances and set(new_variances) != targets:
        raise BadTarget("new_variances must cover every target")
    A = m.A.copy()
    omega = m.omega.copy()
    for t in targets:
        A[:, t] = 0.0
        if t in new_variances:
            omega[t] = float(new_variances[t])
    return SemModel(A, omega)


def interventional_models(
    base: SemModel,
    spec: InterventionSpec,
    rng: np.random.Generator,
    variance_range: tuple = (1.0, 2.25),
) -> list[SemModel]:
    """One intervened SEM per class; target variances are drawn fresh from ``variance_range``."""
    spec.validate(base.p)
    lo, hi = variance_range
    out = []
    for t in spec.targets:
        nv = {v: lo + (hi - lo) * rng.random() for v in sorted(t)}
        out.append(apply_intervention(base, t, nv))
    return out


def sem_from_dag(dag: Dag, rng: np.random.Generator, weight_range=((-1.0, -0.1), (0.1, 1.0)),
                 variance_range=(1.0, 2.25)) -> SemModel:
    edges = sorted(dag.edges)
    A = np.zeros((dag.p, dag.p))
    if edges:
        w = _draw_weights(rng, weight_range, len(edges))
        for (i, j), x in zip(edges, w):
            A[i, j] = x
    lo, hi = variance_range
    return SemModel(A, lo + (hi - lo) * rng.random(dag.p))

