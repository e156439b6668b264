"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the block-structured code paths under
test: dense design matrices, LAPACK factorizations, brute-force maxima.
"""

import numpy as np


def dense_embed(arm: int, x: np.ndarray, z: np.ndarray, n_arms: int) -> np.ndarray:
    d1, d2 = len(x), len(z)
    v = np.zeros(d1 + d2 * n_arms)
    v[:d1] = x
    v[d1 + arm * d2 : d1 + (arm + 1) * d2] = z
    return v


class DenseSharedUCB:
    """Naive (d1 + d2*K)-dimensional reference for the shared-reduction policies.

    Keeps the full dense design matrix, re-inverts it every round with
    LAPACK, and scores arms by looping.  Slow but unarguable.
    """

    def __init__(self, d1, d2, n_arms, lam, gamma):
        self.d1, self.d2, self.n_arms, self.gamma = d1, d2, n_arms, gamma
        dim = d1 + d2 * n_arms
        self.M = lam * np.eye(dim)
        self.u = np.zeros(dim)
        self.phi = np.zeros(dim)

    def scores(self, ctx) -> np.ndarray:
        m_inv = np.linalg.inv(self.M)
        out = np.empty(self.n_arms)
        for i in range(self.n_arms):
            v = dense_embed(i, ctx.xs[i], ctx.zs[i], self.n_arms)
            out[i] = v @ self.phi + self.gamma * np.sqrt(v @ m_inv @ v)
        return out

    def select_arm(self, ctx) -> int:
        return int(np.argmax(self.scores(ctx)))

    def update(self, arm, x, z, reward) -> None:
        v = dense_embed(arm, x, z, self.n_arms)
        self.M += np.outer(v, v)
        self.u += reward * v
        self.phi = np.linalg.solve(self.M, self.u)


def dense_ridge(rows: np.ndarray, ys: np.ndarray, lam: float) -> np.ndarray:
    """Ridge solution via dense normal equations."""
    dim = rows.shape[1]
    return np.linalg.solve(rows.T @ rows + lam * np.eye(dim), rows.T @ ys)


def char_poly_coefficients(a: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients via the Faddeev-LeVerrier recursion.

    Returns monic coefficients [1, c_{n-1}, ..., c_0]; uses only matrix
    products and traces, independent of any eigensolver.
    """
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


def eigenvalues_by_char_poly(a: np.ndarray) -> np.ndarray:
    """Eigenvalues as roots of the characteristic polynomial, ascending."""
    roots = np.roots(char_poly_coefficients(a))
    return np.sort(roots.real)


def brute_force_best_arm(params, ctx) -> tuple[int, float]:
    best_val = -np.inf
    best_arm = -1
    for i in range(ctx.n_arms):
        val = float(params.theta @ ctx.xs[i] + params.betas[i] @ ctx.zs[i])
        if val > best_val:
            best_val = val
            best_arm = i
    return best_arm, best_val
