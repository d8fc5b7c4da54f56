import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointges import _kernels as kern

needs_numba = pytest.mark.skipif(not kern.USE_NUMBA, reason="numba disabled or unavailable")


@needs_numba
@given(st.integers(0, 10_000), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_gram_rss_backends_agree(seed, k):
    rng = np.random.default_rng(seed)
    p = 6
    grams = np.stack([(lambda X: X.T @ X / 50)(rng.standard_normal((50, p))) for _ in range(k)])
    idx = np.sort(rng.choice(np.arange(1, p), size=int(rng.integers(0, p - 1)), replace=False)).astype(np.int64)
    a = kern.gram_rss(grams, 0, idx, use_numba=False)
    b = kern.gram_rss(grams, 0, idx, use_numba=True)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
def test_gram_rss_singular_block_is_nan_on_both():
    X = np.random.default_rng(1).standard_normal((30, 3))
    X[:, 2] = X[:, 1]
    G = (X.T @ X / 30)[None]
    idx = np.array([1, 2], dtype=np.int64)
    for flag in (False, True):
        assert np.isnan(kern.gram_rss(G, 0, idx, use_numba=flag)[0])


@needs_numba
@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_lasso_path_backends_agree(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 7))
    y = X[:, :3] @ rng.standard_normal(3) + rng.standard_normal(60)
    G, c = X.T @ X / 60, X.T @ y / 60
    lams = 2 * np.abs(c).max() * np.logspace(0, -3, 12)
    ca, ia, va = kern.cd_lasso_path(G, c, lams, tol=1e-10, use_numba=False)
    cb, ib, vb = kern.cd_lasso_path(G, c, lams, tol=1e-10, use_numba=True)
    assert np.allclose(ca, cb, atol=1e-9)
    assert np.all(va <= 1e-10) and np.all(vb <= 1e-10)


@needs_numba
def test_forward_sample_backends_agree():
    rng = np.random.default_rng(2)
    A = np.triu(rng.uniform(-1, 1, (6, 6)) * (rng.random((6, 6)) < 0.5), 1)
    perm = rng.permutation(6)
    A = A[np.ix_(perm, perm)]
    order = np.argsort(perm)
    eps = rng.standard_normal((100, 6))
    a = kern.forward_sample(eps, A, order, use_numba=False)
    b = kern.forward_sample(eps, A, order, use_numba=True)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a - a @ A, eps, atol=1e-10)
