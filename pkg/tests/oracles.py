"""Reference implementations used only by the test suite."""

import numpy as np


def expm_taylor(A, terms=50):
    A = np.asarray(A, dtype=float)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def h_taylor(W):
    W = np.asarray(W, dtype=float)
    return np.trace(expm_taylor(W * W)) - W.shape[0]


def central_difference(f, W, step=1e-5):
    G = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        e = np.zeros_like(W)
        e[idx] = step
        G[idx] = (f(W + e) - f(W - e)) / (2 * step)
    return G


def max_relative_error(analytic, numeric):
    scale = np.maximum(np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def ols_slope(y, x):
    x = x - x.mean()
    return float(x @ (y - y.mean()) / (x @ x))


def auroc_pairs(scores, labels):
    """O(P*N) pair counting: concordant pairs plus half the ties."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l != 1]
    num = 0.0
    for p in pos:
        for q in neg:
            num += 1.0 if p > q else 0.5 if p == q else 0.0
    return num / (len(pos) * len(neg))


def shd(learned, truth):
    """Structural Hamming distance between adjacency patterns; a reversal counts once."""
    A = np.asarray(learned) != 0
    B = np.asarray(truth) != 0
    n = A.shape[0]
    d = 0
    for i in range(n):
        for j in range(i + 1, n):
            if (A[i, j], A[j, i]) != (B[i, j], B[j, i]):
                d += 1
    return d
