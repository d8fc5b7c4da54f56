import numpy as np
import pytest

from jointges.graph import Dag, Pdag, complete_to_cpdag, consistent_extension, enumerate_class, is_cpdag
from jointges.scoring import MultiDataset, ScoreConfig, Scorer
from jointges.search import (
    SearchConfig,
    TooLarge,
    _GES,
    exhaustive_best_dag,
    ges_fit,
    gies_fit,
    separate_fit,
)
from jointges.sem import InterventionSpec, JointModelConfig, SemModel, interventional_models, random_joint_model, sample, sem_from_dag

from conftest import random_dag


def D(p, *edges):
    return Dag(p, frozenset(edges))


def data_from(d, n, seed, K=1):
    rng = np.random.default_rng(seed)
    return MultiDataset([sample(sem_from_dag(d, rng), n, rng) for _ in range(K)])


def test_empty_model_gives_empty_graph():
    rng = np.random.default_rng(0)
    data = MultiDataset([rng.standard_normal((10_000, 5))])
    g, trace = ges_fit(data, ScoreConfig())
    assert len(g) == 0 and len(trace) == 0


def test_empty_model_with_sample_size_growing_penalty():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        data = MultiDataset([rng.standard_normal((10_000, 5))])
        g, _ = ges_fit(data, ScoreConfig(lambda1_sq=2 * np.log(data.n) / data.n))
        assert len(g) == 0


def test_chain_recovers_undirected_skeleton():
    chain = D(3, (0, 1), (1, 2))
    data = data_from(chain, 10_000, 0)
    g, _ = ges_fit(data, ScoreConfig())
    assert g == complete_to_cpdag(chain)
    assert g == complete_to_cpdag(exhaustive_best_dag(data, ScoreConfig()))


def test_vstructure_stays_directed():
    vs = D(3, (0, 1), (2, 1))
    data = data_from(vs, 10_000, 0)
    g, _ = ges_fit(data, ScoreConfig())
    assert g.directed == vs.edges and not g.undirected
    assert exhaustive_best_dag(data, ScoreConfig()) == vs


@pytest.mark.parametrize("seed", range(5))
def test_small_structures_with_sample_size_growing_penalty(seed):
    cfg = ScoreConfig(lambda1_sq=2 * np.log(10_000) / 10_000)
    chain, vs = D(3, (0, 1), (1, 2)), D(3, (0, 1), (2, 1))
    g, _ = ges_fit(data_from(chain, 10_000, seed), cfg)
    assert g == complete_to_cpdag(chain)
    data = data_from(vs, 10_000, seed)
    g, _ = ges_fit(data, cfg)
    assert g == Pdag.from_dag(vs)
    assert exhaustive_best_dag(data, cfg) == vs


def test_exhaustive_examples():
    rng = np.random.default_rng(3)
    assert exhaustive_best_dag(MultiDataset([rng.standard_normal((50, 1))]), ScoreConfig()) == D(1)
    noise = MultiDataset([rng.standard_normal((50, 2))])
    assert exhaustive_best_dag(noise, ScoreConfig(lambda1_sq=10.0)) == D(2)
    with pytest.raises(TooLarge):
        exhaustive_best_dag(MultiDataset([rng.standard_normal((50, 6))]), ScoreConfig())


def test_vstructure_scores_strictly_above_alternatives():
    vs = D(3, (0, 1), (2, 1))
    data = data_from(vs, 10_000, 0)
    s = Scorer(data, ScoreConfig())
    from jointges.graph import all_dags
    others = [s.graph_score(d) for d in all_dags(3) if d != vs]
    assert len(others) == 24 and s.graph_score(vs) > max(others)


def _replay(data, scfg, trace):
    ges = _GES(Scorer(data, scfg), SearchConfig(), data.p - 1)
    for m in trace.moves:
        ges.g = ges._apply(m.kind, m.x, m.y, m.subset)
        yield ges.g.to_pdag(), m


def test_trace_is_valid_and_monotone():
    rng = np.random.default_rng(5)
    cfg = JointModelConfig(p=10, K=2, core_edges=12, extra_edges=3, seed=5)
    _, sems, _ = random_joint_model(cfg, rng)
    data = MultiDataset([sample(m, 150, rng) for m in sems])
    scfg = ScoreConfig(scaling_c=1.0)
    g, trace = ges_fit(data, scfg)
    assert len(trace) > 0
    assert trace.initial_score == pytest.approx(Scorer(data, scfg).graph_score(D(10)))
    kinds = [m.kind for m in trace.moves]
    assert kinds == sorted(kinds, key=lambda k: k != "insert")
    last = None
    for pdag, m in _replay(data, scfg, trace):
        assert is_cpdag(pdag)
        ext_score = Scorer(data, scfg).graph_score(consistent_extension(pdag))
        assert ext_score == pytest.approx(m.score_after, abs=1e-8)
        assert m.delta >= 1e-9
        last = pdag
    assert last == g


def test_determinism():
    rng = np.random.default_rng(6)
    d = random_dag(rng, 8, 0.3)
    data = data_from(d, 300, 6, K=2)
    a = ges_fit(data, ScoreConfig())
    b = ges_fit(data, ScoreConfig())
    assert a[0] == b[0] and a[1].to_jsonl() == b[1].to_jsonl()


def test_in_degree_bound():
    rng = np.random.default_rng(7)
    hub = D(6, (0, 5), (1, 5), (2, 5), (3, 5), (4, 5))
    A = np.zeros((6, 6))
    A[:5, 5] = 0.8
    data = MultiDataset([sample(SemModel(A, np.ones(6)), 2000, rng)])
    g, _ = ges_fit(data, ScoreConfig(max_in_degree=2))
    for m in enumerate_class(g, cap=500)[0]:
        assert max(m.in_degrees()) <= 2
    full, _ = ges_fit(data, ScoreConfig())
    assert full == complete_to_cpdag(hub)


def test_iterate_flag_runs():
    data = data_from(D(4, (0, 1), (1, 2), (2, 3)), 500, 8)
    g1, _ = ges_fit(data, ScoreConfig(), SearchConfig(iterate=True))
    g2, _ = ges_fit(data, ScoreConfig())
    assert g1 == g2


def test_move_limit_flag():
    data = data_from(D(4, (0, 1), (1, 2), (2, 3)), 500, 9)
    _, trace = ges_fit(data, ScoreConfig(), SearchConfig(max_moves=1))
    assert trace.hit_move_limit and len(trace) == 1


def test_trace_jsonl():
    import json
    data = data_from(D(3, (0, 1), (2, 1)), 2000, 10)
    _, trace = ges_fit(data, ScoreConfig())
    recs = [json.loads(line) for line in trace.to_jsonl().splitlines()]
    assert len(recs) == len(trace) and all({"kind", "x", "y", "delta"} <= set(r) for r in recs)


def test_separate_fit_examples():
    d = D(4, (0, 1), (1, 2), (3, 2))
    single = data_from(d, 1000, 11)
    (g, _), = separate_fit(single, ScoreConfig())
    assert g == ges_fit(single, ScoreConfig())[0]
    X = single.classes[0]
    twin = MultiDataset([X, X])
    g0, g1 = [g for g, _ in separate_fit(twin, ScoreConfig())]
    assert g0 == g1 == g


def test_separate_uses_per_class_sample_size():
    rng = np.random.default_rng(12)
    data = MultiDataset([rng.standard_normal((100, 4)), rng.standard_normal((300, 4))])
    cfg = ScoreConfig(scaling_c=2.0)
    one = data.single_class(0)
    assert cfg.penalty(one) == pytest.approx(2.0 * np.log(4) / 100)


def test_gies_empty_spec_matches_ges():
    d = D(4, (0, 1), (1, 2), (3, 2))
    data = data_from(d, 800, 13, K=2)
    spec = InterventionSpec((frozenset(), frozenset()))
    assert gies_fit(data.with_interventions(spec), ScoreConfig())[0] == ges_fit(data, ScoreConfig())[0]


def test_gies_full_identifiability_with_single_node_interventions():
    rng = np.random.default_rng(14)
    chain = D(3, (0, 1), (1, 2))
    A = np.zeros((3, 3))
    A[0, 1], A[1, 2] = 0.9, -0.8
    base = SemModel(A, np.ones(3))
    spec = InterventionSpec((frozenset(), {0}, {1}, {2}))
    models = interventional_models(base, spec, rng)
    data = MultiDataset([sample(m, 5000, rng) for m in models], spec)
    g, _ = gies_fit(data, ScoreConfig())
    assert g == Pdag.from_dag(chain)
    assert exhaustive_best_dag(data, ScoreConfig(), interventional=True) == chain
