"""Hot inner loops, compiled with numba when available.

Set ``JOINTGES_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both paths run the same algorithm and agree up to floating-point summation
order; tests check one against the other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("JOINTGES_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - depends on environment
    njit = None

USE_NUMBA = njit is not None


def _cd_lasso_path_py(G, c, lams, a0, tol, max_iter):
    """Covariance-form coordinate descent along a decreasing penalty grid.

    Minimizes ``a' G a - 2 c' a + lam * |a|_1`` for each ``lam`` in ``lams``,
    which is ``(1/n)|y - X a|^2 + lam |a|_1`` up to a constant when
    ``G = X'X/n`` and ``c = X'y/n``. Warm starts from the previous solution.
    Returns the coefficient matrix, per-lambda sweep counts and the final
    KKT violation for each lambda.
    """
    m = G.shape[0]
    L = lams.shape[0]
    coefs = np.zeros((L, m))
    iters = np.zeros(L, dtype=np.int64)
    viol = np.zeros(L)
    a = a0.copy()
    grad = c - G @ a  # X'r/n
    for li in range(L):
        lam = lams[li]
        half = 0.5 * lam
        it = 0
        v = np.inf
        while it < max_iter:
            it += 1
            for i in range(m):
                gii = G[i, i]
                if gii <= 0.0:
                    continue
                old = a[i]
                rho = grad[i] + gii * old
                if rho > half:
                    new = (rho - half) / gii
                elif rho < -half:
                    new = (rho + half) / gii
                else:
                    new = 0.0
                if new != old:
                    grad -= G[:, i] * (new - old)
                    a[i] = new
            v = 0.0
            for i in range(m):
                g2 = 2.0 * grad[i]
                if a[i] > 0.0:
                    e = abs(g2 - lam)
                elif a[i] < 0.0:
                    e = abs(g2 + lam)
                else:
                    e = abs(g2) - lam
                if e > v:
                    v = e
            if v <= tol:
                break
        coefs[li] = a
        iters[li] = it
        viol[li] = v
    return coefs, iters, viol


def _cd_lasso_path_nb_src(G, c, lams, a0, tol, max_iter):
    m = G.shape[0]
    L = lams.shape[0]
    coefs = np.zeros((L, m))
    iters = np.zeros(L, dtype=np.int64)
    viol = np.zeros(L)
    a = a0.copy()
    grad = c.copy()
    for i in range(m):
        for k in range(m):
            grad[i] -= G[i, k] * a[k]
    for li in range(L):
        lam = lams[li]
        half = 0.5 * lam
        it = 0
        v = np.inf
        while it < max_iter:
            it += 1
            for i in range(m):
                gii = G[i, i]
                if gii <= 0.0:
                    continue
                old = a[i]
                rho = grad[i] + gii * old
                if rho > half:
                    new = (rho - half) / gii
                elif rho < -half:
                    new = (rho + half) / gii
                else:
                    new = 0.0
                if new != old:
                    d = new - old
                    for k in range(m):
                        grad[k] -= G[k, i] * d
                    a[i] = new
            v = 0.0
            for i in range(m):
                g2 = 2.0 * grad[i]
                if a[i] > 0.0:
                    e = abs(g2 - lam)
                elif a[i] < 0.0:
                    e = abs(g2 + lam)
                else:
                    e = abs(g2) - lam
                if e > v:
                    v = e
            if v <= tol:
                break
        for k in range(m):
            coefs[li, k] = a[k]
        iters[li] = it
        viol[li] = v
    return coefs, iters, viol


def _forward_sample_py(eps, A, order):
    """Solve ``X = X A + eps`` row-wise by walking ``order`` (a topological order)."""
    X = eps.copy()
    for j in order:
        pa = np.nonzero(A[:, j])[0]
        if pa.size:
            X[:, j] += X[:, pa] @ A[pa, j]
    return X


def _forward_sample_nb_src(eps, A, order):
    n, p = eps.shape
    X = eps.copy()
    for t in range(order.shape[0]):
        j = order[t]
        for i in range(p):
            w = A[i, j]
            if w != 0.0:
                for r in range(n):
                    X[r, j] += w * X[r, i]
    return X


def _gram_rss_py(grams, j, idx):
    """Residual sums ``G_jj - G_jP G_PP^-1 G_Pj`` for every Gram in the stack.

    Entries where the parent block is not numerically positive definite come
    back as NaN so the caller can fall back to a pseudo-inverse.
    """
    K = grams.shape[0]
    out = np.empty(K)
    if idx.size == 0:
        for k in range(K):
            out[k] = grams[k, j, j]
        return out
    Gpp = grams[:, idx[:, None], idx[None, :]]
    gpj = grams[:, idx, j]
    for k in range(K):
        try:
            L = np.linalg.cholesky(Gpp[k])
        except np.linalg.LinAlgError:
            out[k] = np.nan
            continue
        if np.any(np.diag(L) ** 2 <= 1e-14 * np.abs(np.diag(Gpp[k]))):
            out[k] = np.nan
            continue
        z = np.linalg.solve(L, gpj[k])
        out[k] = grams[k, j, j] - z @ z
    return out


def _gram_rss_nb_src(grams, j, idx):
    K = grams.shape[0]
    m = idx.shape[0]
    out = np.empty(K)
    L = np.zeros((m, m))
    z = np.zeros(m)
    for k in range(K):
        G = grams[k]
        ok = True
        for a in range(m):
            for b in range(a + 1):
                s = G[idx[a], idx[b]]
                for c in range(b):
                    s -= L[a, c] * L[b, c]
                if a == b:
                    if s <= 1e-14 * abs(G[idx[a], idx[a]]) or s <= 0.0:
                        ok = False
                        break
                    L[a, a] = np.sqrt(s)
                else:
                    L[a, b] = s / L[b, b]
            if not ok:
                break
        if not ok:
            out[k] = np.nan
            continue
        acc = G[j, j]
        for a in range(m):
            s = G[idx[a], j]
            for c in range(a):
                s -= L[a, c] * z[c]
            z[a] = s / L[a, a]
            acc -= z[a] * z[a]
        out[k] = acc
    return out


if USE_NUMBA:
    _cd_lasso_path_nb = njit(cache=True)(_cd_lasso_path_nb_src)
    _forward_sample_nb = njit(cache=True)(_forward_sample_nb_src)
    _gram_rss_nb = njit(cache=True)(_gram_rss_nb_src)
else:  # pragma: no cover
    _cd_lasso_path_nb = None
    _forward_sample_nb = None
    _gram_rss_nb = None


def gram_rss(grams, j, idx, use_numba=None):
    """``grams`` is a C-contiguous ``(K, p, p)`` float64 stack; ``idx`` an int64 array."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and USE_NUMBA:
        return _gram_rss_nb(grams, j, idx)
    return _gram_rss_py(grams, j, idx)


def cd_lasso_path(G, c, lams, a0=None, tol=1e-7, max_iter=10_000, use_numba=None):
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.float64)
    a0 = np.zeros(G.shape[0]) if a0 is None else np.ascontiguousarray(a0, dtype=np.float64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and USE_NUMBA:
        return _cd_lasso_path_nb(G, c, lams, a0, float(tol), int(max_iter))
    return _cd_lasso_path_py(G, c, lams, a0, float(tol), int(max_iter))


def forward_sample(eps, A, order, use_numba=None):
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and USE_NUMBA:
        return _forward_sample_nb(eps, A, order)
    return _forward_sample_py(eps, A, order)
