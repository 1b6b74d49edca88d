"""Slow, loop-based reference implementations used as test oracles."""

import numpy as np


def brute_covariance(X, phi, eps):
    K, N, M = X.shape
    V = np.zeros((K, M, M), complex)
    for k in range(K):
        for n in range(N):
            for i in range(M):
                for j in range(M):
                    V[k, i, j] += phi[k, n] * X[k, n, i] * np.conj(X[k, n, j]) / N
        V[k] += eps * np.eye(M)
    return V


def brute_cost(W, X, beta, C=None, P=None, gammas=None, targets=None, Pbg=None, gbg=0.0):
    K, N, M = X.shape
    S = W.num_soi
    j_bss = 0.0
    for q in range(S):
        for n in range(N):
            e = 0.0
            for k in range(K):
                e += abs(np.dot(W.W[k, q], X[k, n])) ** 2
            j_bss += (2 / beta) * np.sqrt(e) ** beta / N
    for k in range(K):
        j_bss -= 2 * np.log(abs(np.linalg.det(W.W[k])))
    j_bg = 0.0
    if S < M:
        for k in range(K):
            Ck = sum(np.outer(X[k, n], X[k, n].conj()) for n in range(N)) / N
            if Pbg is not None:
                Ck = Ck + gbg * Pbg[k]
            B = W.W[k, S:]
            j_bg += np.log(np.linalg.det(B @ Ck @ B.conj().T).real)
    j_prior = 0.0
    for q, Pq in (P or {}).items():
        for k in range(K):
            w = W.W[k, q].conj()
            j_prior += gammas[q] * (w.conj() @ Pq[k] @ w).real
    for q, h in (targets or {}).items():
        for k in range(K):
            j_prior += gammas[q] * np.sum(np.abs(W.W[k, q].conj() - h[k]) ** 2)
    return j_bss, j_bg, j_prior


def normal_equations(est, R, target):
    """Independent oracle: explicit Gram-matrix solves."""
    r = R[target]
    s_t = (r @ est) / (r @ r) * r
    G = R @ R.T
    c = np.linalg.solve(G, R @ est)
    p = c @ R
    return s_t, p - s_t, est - p
