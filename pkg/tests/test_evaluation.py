import json

import numpy as np
import pytest

from jointges.evaluation import (
    ExperimentConfig,
    confusion,
    hub_nodes,
    matched_roc_wins,
    rates,
    roc_sweep,
    roc_to_csv,
    run_comparison,
    run_replicate,
    run_replicates,
    stability_selection,
)
from jointges.graph import Dag, Pdag, SizeMismatch
from jointges.pipeline import PipelineConfig
from jointges.scoring import MultiDataset, ScoreConfig
from jointges.sem import JointModelConfig, sample, sem_from_dag


def D(p, *edges):
    return Dag(p, frozenset(edges))


def small_cfg(**kw):
    base = dict(model=JointModelConfig(p=8, K=2, core_edges=8, extra_edges=2),
                n_k=80, replicates=2, scaling_grid=(2.0, 4.0), tuning_grid=(2.0, 4.0),
                cv_folds=3, lasso_grid_size=10)
    base.update(kw)
    return ExperimentConfig(**base)


def test_confusion_example():
    assert confusion(D(3, (1, 0), (1, 2)), D(3, (0, 1))) == (1, 1, 0, 1)
    assert confusion(D(3, (1, 0), (1, 2)), D(3, (0, 1)), strict=True) == (0, 2, 1, 1)


def test_confusion_counts_partition_pairs():
    rng = np.random.default_rng(0)
    for _ in range(30):
        p = int(rng.integers(2, 7))
        a = Dag.from_matrix(np.triu(rng.random((p, p)) < 0.4, 1).astype(float))
        b = Dag.from_matrix(np.triu(rng.random((p, p)) < 0.4, 1).astype(float))
        assert sum(confusion(a, b)) == p * (p - 1) // 2


def test_confusion_undirected_estimate_and_size_mismatch():
    est = Pdag(2, frozenset(), frozenset({(0, 1)}))
    assert confusion(est, D(2, (0, 1))) == (1, 0, 0, 0)
    assert confusion(est, D(2, (0, 1)), strict=True) == (0, 1, 1, 0)
    with pytest.raises(SizeMismatch):
        confusion(D(2), D(3))


def test_rates_examples():
    assert rates(1, 1, 0, 1) == (1.0, 0.5)
    assert rates(0, 0, 0, 0) == (0.0, 0.0)


def test_hub_nodes():
    star = D(8, *[(0, j) for j in range(1, 8)])
    assert hub_nodes(star) == {0}
    assert hub_nodes(D(8, *[(0, j) for j in range(1, 6)])) == set()


def test_experiment_config_round_trip_and_validation():
    cfg = small_cfg()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"replicats": 3})
    with pytest.raises(ValueError):
        small_cfg(replicates=0)


def test_run_replicate_is_replayable():
    cfg = small_cfg()
    a, b = run_replicate(cfg, 1), run_replicate(cfg, 1)
    assert a["error"] is None
    strip = lambda rec: [{k: v for k, v in pt.items() if k != "runtime"} for pt in rec["points"]]
    assert strip(a) == strip(b)


def test_run_replicate_isolates_failures():
    cfg = small_cfg(model=JointModelConfig(p=4, K=2, core_edges=5, extra_edges=9))
    rec = run_replicate(cfg, 0)
    assert rec["error"] is not None and rec["points"] == []


def test_run_comparison_smoke_and_serialisation():
    cfg = small_cfg(replicates=1)
    s = run_comparison(cfg)
    assert {(r["method"], r["c"]) for r in s.rows} == {(m, c) for m in ("joint", "separate") for c in (2.0, 4.0)}
    assert s.success_fraction == 1.0
    assert all(r["n_ok"] == 1 and r["mean_shd"] >= 0 for r in s.rows)
    lines = [ln for ln in s.to_csv().splitlines() if not ln.startswith("#")]
    assert lines[0].split(",")[-1] == "mean_runtime" and len(lines) == 5
    assert "mean_runtime" not in s.to_csv(runtimes=False)
    assert "mean_runtime" not in s.to_json(runtimes=False)
    assert json.loads(s.to_json())["replicates"] == 1


def test_paired_difference_matches_rows():
    cfg = small_cfg()
    recs = run_replicates(cfg)
    s = run_comparison(cfg, records=recs)
    diff, se = s.paired_difference(2.0)
    assert diff == pytest.approx(s.row("separate", 2.0)["mean_shd"] - s.row("joint", 2.0)["mean_shd"])
    assert se >= 0


def test_roc_sweep_sorted_and_csv():
    cfg = small_cfg(replicates=1)
    roc = roc_sweep(cfg)
    for pts in roc.values():
        assert [p[0] for p in pts] == sorted(p[0] for p in pts) and len(pts) == 2
    assert roc_to_csv(roc).count("\n") == 2 + 4


def test_matched_roc_wins():
    roc = {"joint": [(0.0, 0.5, 1.0), (0.1, 0.9, 2.0), (0.5, 1.0, 3.0)],
           "separate": [(0.01, 0.4, 1.0), (0.11, 0.95, 2.0)]}
    assert matched_roc_wins(roc) == (2, 1)


def test_jobs_do_not_change_results():
    cfg = small_cfg()
    strip = lambda recs: [[{k: v for k, v in pt.items() if k != "runtime"} for pt in r["points"]] for r in recs]
    assert strip(run_replicates(cfg, jobs=1)) == strip(run_replicates(cfg, jobs=2))


def _stability_data():
    rng = np.random.default_rng(3)
    d = D(4, (0, 1), (1, 2), (2, 3))
    return MultiDataset([sample(sem_from_dag(d, rng), 200, rng) for _ in range(2)])


def test_stability_selection_is_order_independent():
    data = _stability_data()
    cfg = PipelineConfig(mode="separate", score=ScoreConfig(scaling_c=2.0))
    a = stability_selection(data, cfg, subsamples=6, seed=5)
    b = stability_selection(data, cfg, subsamples=6, seed=5, order=[5, 3, 1, 0, 2, 4])
    assert np.array_equal(a.frequencies, b.frequencies) and a.graphs == b.graphs
    assert np.all((a.frequencies >= 0) & (a.frequencies <= 1))
    for k in range(2):
        assert a.graphs[k] == frozenset(map(tuple, np.argwhere(a.frequencies[k] >= 0.6).tolist()))


def test_stability_threshold_edge_cases():
    data = _stability_data()
    cfg = PipelineConfig(mode="separate")
    zero = stability_selection(data, cfg, subsamples=3, threshold=0.0)
    one = stability_selection(data, cfg, subsamples=3, threshold=1.0)
    for k in range(2):
        assert one.graphs[k] <= zero.graphs[k]
        assert zero.graphs[k] == frozenset(map(tuple, np.argwhere(zero.frequencies[k] > 0).tolist()))
    with pytest.raises(ValueError):
        stability_selection(data, cfg, subsamples=1)
    with pytest.raises(ValueError):
        stability_selection(data, cfg, fraction=1.0)
