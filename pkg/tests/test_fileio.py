import json

import numpy as np
import pytest
from hypothesis import given, settings

from jointges.fileio import (
    FormatError,
    dump_graph,
    dump_samples,
    dump_sem,
    load_graph,
    load_interventions,
    load_samples,
    load_sem,
    sha256_file,
    write_atomic,
)
from jointges.graph import Dag, Pdag, complete_to_cpdag
from jointges.sem import sem_from_dag

from conftest import dags


@given(dags(max_p=7))
@settings(max_examples=50, deadline=None)
def test_graph_round_trip(d):
    assert load_graph(dump_graph(d)) == d
    g = complete_to_cpdag(d)
    back = load_graph(dump_graph(g))
    if g.undirected:
        assert back == g
    else:
        assert back == Dag(g.p, g.directed)


@given(dags(max_p=6))
@settings(max_examples=30, deadline=None)
def test_sem_round_trip_is_exact(d):
    m = sem_from_dag(d, np.random.default_rng(d.p))
    back = load_sem(dump_sem(m))
    assert np.array_equal(back.A, m.A) and np.array_equal(back.omega, m.omega)


def test_samples_round_trip_is_exact():
    X = np.random.default_rng(0).standard_normal((7, 3))
    names, Y = load_samples(dump_samples(X))
    assert names == ["X0", "X1", "X2"] and np.array_equal(X, Y)


@pytest.mark.parametrize("text", ["", "1.0,2.0\n3,4\n", "a,b\n1,2,3\n", "a,b\n1,x\n"])
def test_bad_samples(text):
    with pytest.raises(FormatError):
        load_samples(text)


@pytest.mark.parametrize("text", ["", "0\t1\n", "p=2\n0\t2\n", "p=2\n0\t0\n", "p=2\n0 1\n", "p=x\n"])
def test_bad_graphs(text):
    with pytest.raises(FormatError):
        load_graph(text)


def test_bad_sem():
    with pytest.raises(FormatError):
        load_sem("p=2\n0\t1\t0.5\n")
    with pytest.raises(FormatError):
        load_sem("p=2\n0\t1\nomega=1,1\n")


def test_interventions():
    spec = load_interventions(json.dumps([[], [2], [0, 1]]))
    assert spec.targets == (frozenset(), frozenset({2}), frozenset({0, 1}))
    for bad in ("{", "[1, 2]", '[["a"]]', "[[true]]"):
        with pytest.raises(FormatError):
            load_interventions(bad)


def test_write_atomic_and_digest(tmp_path):
    f = tmp_path / "a.txt"
    write_atomic(f, "hello\n")
    assert f.read_text() == "hello\n"
    assert sha256_file(f) == "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
