"""Loop-heavy numeric kernels, compiled with numba when available.

Every kernel is written as plain loops over float64 arrays so the exact same
source runs compiled (numba backend) or interpreted (NumPy fallback).  The
batched triangular solve additionally has a vectorized SciPy fallback because
the interpreted loop would be needlessly slow.  ``benchmarks/bench_kernels.py``
times both paths.
"""

import numpy as np

from ._backend import USE_NUMBA, njit_or_py


@njit_or_py
def enet_cd(G, c, l1, l2, tol, max_iter):
    # Cyclic coordinate descent for  min_k  k'Gk - 2c'k + l2*||k||_2^2 + l1*||k||_1
    # (the expansion of ||beta - Theta k||^2 up to a constant, G = Theta'Theta,
    # c = Theta'beta).  Soft threshold at l1/2 comes from the subgradient of the
    # un-halved objective.
    M = c.shape[0]
    k = np.zeros(M)
    Gk = np.zeros(M)
    thr = 0.5 * l1
    for _ in range(max_iter):
        max_change = 0.0
        for m in range(M):
            old = k[m]
            rho = c[m] - (Gk[m] - G[m, m] * old)
            denom = G[m, m] + l2
            if denom <= 0.0:
                new = 0.0
            elif rho > thr:
                new = (rho - thr) / denom
            elif rho < -thr:
                new = (rho + thr) / denom
            else:
                new = 0.0
            dk = new - old
            if dk != 0.0:
                k[m] = new
                for j in range(M):
                    Gk[j] += G[j, m] * dk
            if abs(dk) > max_change:
                max_change = abs(dk)
        if max_change < tol:
            break
    return k


@njit_or_py
def phi_kappa_subgrad(beta, Theta, inv_lam, p_is_one, tol, max_iter):
    # Damped subgradient descent on F(k) = ||beta - Theta k||_p^2 + sum inv_lam*k^2
    # for p = 1 (p_is_one) or p = inf.  Polyak-style steps against a shrinking
    # target level, using F >= 0 as a global lower bound.
    M = Theta.shape[1]
    k = np.zeros(M)
    k_best = np.zeros(M)
    if p_is_one:
        pn = np.sum(np.abs(beta))
    else:
        pn = np.max(np.abs(beta))
    f_best = pn * pn
    gap = 0.25 * f_best + 1e-12
    f_prev = f_best
    n_epochs = 50
    per_epoch = max(1, max_iter // n_epochs)
    for epoch in range(n_epochs):
        if epoch > 0:
            k = k_best.copy()  # restart each level from the incumbent
        for _ in range(per_epoch):
            v = beta - Theta @ k
            if p_is_one:
                pn = np.sum(np.abs(v))
            else:
                pn = np.max(np.abs(v))
            f = pn * pn + np.sum(inv_lam * k * k)
            if f < f_best:
                f_best = f
                k_best[:] = k
            if p_is_one:
                s = np.sign(v)
            else:
                s = np.zeros_like(v)
                j = np.argmax(np.abs(v))
                s[j] = np.sign(v[j])
            g = -2.0 * pn * (Theta.T @ s) + 2.0 * inv_lam * k
            gn2 = np.sum(g * g)
            if gn2 <= 1e-300:
                return k_best
            target = f_best - gap
            if target < 0.0:
                target = 0.0
            k = k - ((f - target) / gn2) * g
        if gap < tol * max(1.0, f_best) and f_prev - f_best < tol * max(1.0, f_best):
            break
        f_prev = f_best
        gap *= 0.5
    return k_best


@njit_or_py
def read_subgrad_descent(X, y, Psi, sqrt_delta, beta0, tol, max_iter):
    # Subgradient descent with Polyak steps against a geometrically shrinking
    # target level, restarting each level from the incumbent.  The per-level
    # budget must cover the crawl along sharp kinks, so it dominates the
    # level count.  Returns the best iterate; used as the reference solver.
    N = X.shape[0]
    sqrt_n = np.sqrt(N)
    beta = beta0.copy()
    best = beta0.copy()
    r = y - X @ beta
    nr = np.sqrt(np.sum(r * r))
    Pb = Psi @ beta
    q = beta @ Pb
    if q < 0.0:
        q = 0.0
    f_best = nr / sqrt_n + sqrt_delta * np.sqrt(q)
    gap = 0.25 * f_best + 1e-12
    f_prev = f_best
    n_levels = 60
    per_level = max(1, max_iter // n_levels)
    for level in range(n_levels):
        if level > 0:
            beta = best.copy()
        for _ in range(per_level):
            r = y - X @ beta
            nr = np.sqrt(np.sum(r * r))
            Pb = Psi @ beta
            q = beta @ Pb
            if q < 0.0:
                q = 0.0
            nb = np.sqrt(q)
            f = nr / sqrt_n + sqrt_delta * nb
            if f < f_best:
                f_best = f
                best[:] = beta
            g = np.zeros(beta.shape[0])
            if nr > 1e-300:
                g -= (X.T @ r) / (sqrt_n * nr)
            if nb > 1e-300:
                g += (sqrt_delta / nb) * Pb
            gn2 = np.sum(g * g)
            if gn2 <= 1e-300:
                return best
            target = f_best - gap
            if target < 0.0:
                target = 0.0
            beta = beta - ((f - target) / gn2) * g
        if gap < tol * max(1.0, f_best) and f_prev - f_best < tol * max(1.0, f_best):
            break
        f_prev = f_best
        gap *= 0.5
    return best


def _quad_forms_lower_loops(L, H):
    n, d = H.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        w = np.empty(d)
        for j in range(d):
            acc = H[i, j]
            for m in range(j):
                acc -= L[j, m] * w[m]
            wj = acc / L[j, j]
            w[j] = wj
            s += wj * wj
        out[i] = s
    return out


if USE_NUMBA:
    _quad_forms_lower_loops = njit_or_py(_quad_forms_lower_loops)

    def quad_forms_lower(L, H):
        """Row-wise h' M^{-1} h given the lower Cholesky factor L of M."""
        return _quad_forms_lower_loops(L, H)

else:

    def quad_forms_lower(L, H):
        """Row-wise h' M^{-1} h given the lower Cholesky factor L of M."""
        from scipy.linalg import solve_triangular

        W = solve_triangular(L, H.T, lower=True, check_finite=False)
        return np.einsum("ij,ij->j", W, W)
