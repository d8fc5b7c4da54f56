import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointges.graph import Dag, Permutation, topological_order
from jointges.sem import (
    BadTarget,
    ConfigInfeasible,
    InterventionSpec,
    JointModelConfig,
    NotPositiveDefinite,
    SemError,
    SemModel,
    apply_intervention,
    cholesky_sem,
    interventional_models,
    precision_from_sem,
    random_joint_model,
    sample,
    sem_from_dag,
)

from conftest import dags


def edge_model(w=0.5):
    A = np.zeros((2, 2))
    A[0, 1] = w
    return SemModel(A, np.ones(2))


def test_semmodel_validation():
    with pytest.raises(SemError):
        SemModel(np.zeros((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(SemError):
        SemModel(np.array([[0, 1.0], [1.0, 0]]), np.ones(2))
    m = edge_model()
    with pytest.raises(ValueError):
        m.A[0, 1] = 3.0


def test_precision_examples():
    pair = precision_from_sem(SemModel(np.zeros((3, 3)), np.ones(3)))
    assert np.allclose(pair.theta, np.eye(3)) and np.allclose(pair.sigma, np.eye(3))
    pair = precision_from_sem(edge_model())
    assert np.allclose(pair.theta, [[1.25, -0.5], [-0.5, 1.0]], atol=1e-12)
    assert np.allclose(pair.theta @ pair.sigma, np.eye(2), atol=1e-8)


def test_cholesky_examples():
    m = cholesky_sem(np.eye(3), (2, 0, 1))
    assert np.allclose(m.A, 0) and np.allclose(m.omega, 1)
    theta = precision_from_sem(edge_model()).theta
    m = cholesky_sem(theta, (0, 1))
    assert np.allclose(m.A, edge_model().A, atol=1e-12) and np.allclose(m.omega, 1)
    m = cholesky_sem(theta, (1, 0))
    # regression of X0 on X1 under Sigma = [[1, .5], [.5, 1.25]] has slope +0.5/1.25
    assert m.A[1, 0] == pytest.approx(0.4, abs=1e-12) and m.A[0, 1] == 0
    assert np.allclose(m.omega, [0.8, 1.25], atol=1e-12)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_sem(np.array([[1.0, 2.0], [2.0, 1.0]]), (0, 1))


def _random_sem(d: Dag, seed: int) -> SemModel:
    return sem_from_dag(d, np.random.default_rng(seed))


@given(dags(max_p=8), st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_cholesky_round_trip_properties(d, seed, rnd):
    m = _random_sem(d, seed)
    theta = precision_from_sem(m).theta
    pi = topological_order(d).order
    back = cholesky_sem(theta, pi)
    assert np.linalg.norm(back.A - m.A) < 1e-8 and np.linalg.norm(back.omega - m.omega) < 1e-8
    perm = list(range(d.p))
    rnd.shuffle(perm)
    other = cholesky_sem(theta, perm)
    assert Permutation(tuple(perm)).is_consistent(other.dag)
    assert np.linalg.norm(precision_from_sem(other).theta - theta) < 1e-8


def test_sample_is_deterministic_and_matches_covariance():
    A = np.zeros((3, 3))
    A[0, 1], A[1, 2] = 0.8, -0.6
    m = SemModel(A, np.array([1.0, 1.5, 2.0]))
    X1 = sample(m, 1000, np.random.default_rng(3))
    X2 = sample(m, 1000, np.random.default_rng(3))
    assert np.array_equal(X1, X2)
    X = sample(m, 100_000, np.random.default_rng(0))
    assert np.max(np.abs(np.cov(X.T, bias=True) - precision_from_sem(m).sigma)) < 0.05


def test_sample_identity_model():
    n = 20_000
    X = sample(SemModel(np.zeros((4, 4)), np.ones(4)), n, np.random.default_rng(1))
    assert np.max(np.abs(X.T @ X / n - np.eye(4))) < 5 / np.sqrt(n)


def test_random_joint_model_structure():
    cfg = JointModelConfig(p=30, K=3, core_edges=30, extra_edges=10, seed=4)
    dags_, sems, pi = random_joint_model(cfg)
    shared = frozenset.intersection(*(d.edges for d in dags_))
    assert len({len(d) for d in dags_}) == 1
    for d, m in zip(dags_, sems):
        assert pi.is_consistent(d)
        assert len(d) - 10 <= len(shared)
        nz = m.A[m.A != 0]
        assert np.all(np.abs(nz) >= 0.1) and np.all(np.abs(nz) <= 1)
        assert np.all((m.omega >= 1) & (m.omega <= 2.25))


def test_random_joint_model_seed_reproducible():
    cfg = JointModelConfig(p=12, K=2, core_edges=10, extra_edges=3, seed=9)
    a = random_joint_model(cfg)
    b = random_joint_model(cfg)
    assert a[0] == b[0] and all(np.array_equal(x.A, y.A) for x, y in zip(a[1], b[1]))


def test_extra_edges_zero_shares_structure():
    dags_, sems, _ = random_joint_model(JointModelConfig(p=15, K=3, core_edges=15, extra_edges=0, seed=2))
    assert len({d.edges for d in dags_}) == 1


def test_core_edges_in_expectation():
    counts = []
    for s in range(60):
        dags_, _, _ = random_joint_model(JointModelConfig(p=20, K=1, core_edges=20, extra_edges=0, seed=s))
        counts.append(len(dags_[0]))
    assert abs(np.mean(counts) - 20) < 3 * np.sqrt(20 / 60) + 1


def test_config_validation():
    with pytest.raises(ConfigInfeasible):
        random_joint_model(JointModelConfig(p=4, K=2, core_edges=5, extra_edges=7))
    with pytest.raises(ValueError):
        JointModelConfig.from_dict({"p": 5, "colour": 1})
    cfg = JointModelConfig(p=7, K=2, core_edges=5, extra_edges=2)
    assert JointModelConfig.from_dict(cfg.to_dict()) == cfg


def test_apply_intervention_examples():
    A = np.zeros((3, 3))
    A[0, 1], A[1, 2] = 0.7, -0.4
    m = SemModel(A, np.array([1.0, 1.2, 1.4]))
    assert apply_intervention(m, set()) is m or np.array_equal(apply_intervention(m, set()).A, m.A)
    m1 = apply_intervention(m, {1}, {1: 2.0})
    assert m1.A[0, 1] == 0 and m1.A[1, 2] == -0.4
    assert np.allclose(m1.omega, [1.0, 2.0, 1.4])
    mall = apply_intervention(m, {0, 1, 2}, {0: 1.0, 1: 1.0, 2: 1.0})
    assert not np.any(mall.A)
    with pytest.raises(BadTarget):
        apply_intervention(m, {5}, {5: 1.0})
    with pytest.raises(BadTarget):
        apply_intervention(m, {1}, {2: 1.0})


@given(dags(max_p=6), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_intervention_never_adds_edges(d, seed):
    m = _random_sem(d, seed)
    rng = np.random.default_rng(seed)
    targets = frozenset(int(v) for v in np.flatnonzero(rng.random(d.p) < 0.4))
    (mi,) = interventional_models(m, InterventionSpec((targets,)), rng)
    assert d.edges >= mi.dag.edges
    for j in targets:
        assert not np.any(mi.A[:, j])
