"""Dense small-matrix kernels and the block-structured hybrid design matrix.

The design matrix of the embedded (shared-setting) problem is

    M = [[ V    B_1  ...  B_K ]
         [ B_1^T  W_1        ]
         [  ...        ...   ]
         [ B_K^T         W_K ]]

with a d1 x d1 shared block ``V``, one d2 x d2 block ``W_i`` per arm, and
cross blocks ``B_i``.  Every observation touches exactly one arm slot, so M
can be updated and solved without ever materialising the full
(d1 + d2*K)^2 inverse: ``V`` and each ``W_i`` carry Sherman-Morrison
maintained inverses, and solves go through the Schur complement of the
arm-diagonal part against ``V``.  All costs are linear in K.

Supported envelope: d1, d2 <= 64 and K <= 512, everything stored dense
row-major.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SymPosDef",
    "SparseHybridVector",
    "BlockDesign",
    "sym_eigenvalues",
    "jacobi_eigh",
    "hermitian_dilation",
    "max_singular_value",
]

# Full re-inversion cadence for Sherman-Morrison maintained inverses; bounds
# floating-point drift over long runs at negligible amortized cost.
INVERSE_REFRESH_EVERY = 10_000

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100


class SymPosDef:
    """Symmetric positive definite matrix with an incrementally maintained inverse.

    Initialized as ``ridge * I`` (all eigenvalues stay >= ridge under rank-one
    additions).  ``rank_one_update`` adds ``v v^T`` in O(dim^2) via the
    Sherman-Morrison identity; the inverse is rebuilt from scratch every
    ``INVERSE_REFRESH_EVERY`` updates.

    Single-writer: instances may move between threads but must not be mutated
    concurrently.
    """

    __slots__ = ("dim", "ridge", "entries", "inv_entries", "_updates")

    def __init__(self, dim: int, ridge: float):
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        if ridge <= 0:
            raise ValueError(f"ridge weight must be positive, got {ridge}")
        self.dim = int(dim)
        self.ridge = float(ridge)
        self.entries = np.eye(self.dim) * self.ridge
        self.inv_entries = np.eye(self.dim) / self.ridge
        self._updates = 0

    def rank_one_update(self, v: np.ndarray) -> None:
        """Add ``v v^T`` to the matrix and apply the matching inverse update."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {v.shape}")
        self.entries += np.outer(v, v)
        w = self.inv_entries @ v
        denom = 1.0 + float(v @ w)
        self.inv_entries -= np.outer(w, w) / denom
        self._updates += 1
        if self._updates % INVERSE_REFRESH_EVERY == 0:
            self.refresh()

    def refresh(self) -> None:
        """Re-symmetrize and rebuild the inverse from the accumulated entries."""
        self.entries = 0.5 * (self.entries + self.entries.T)
        inv = np.linalg.inv(self.entries)
        self.inv_entries = 0.5 * (inv + inv.T)

    def quad_form_inv(self, v: np.ndarray) -> float:
        """Return ``v^T A^{-1} v`` (clamped to be nonnegative)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {v.shape}")
        return max(0.0, float(v @ self.inv_entries @ v))

    def copy(self) -> "SymPosDef":
        dup = SymPosDef.__new__(SymPosDef)
        dup.dim = self.dim
        dup.ridge = self.ridge
        dup.entries = self.entries.copy()
        dup.inv_entries = self.inv_entries.copy()
        dup._updates = self._updates
        return dup


class SparseHybridVector:
    """One arm's feature pair viewed as a sparse (d1 + d2*K)-vector.

    ``x`` occupies the first d1 coordinates and ``z`` the block of arm
    ``arm`` (0-based); all other coordinates are zero.
    """

    __slots__ = ("arm", "x", "z")

    def __init__(self, arm: int, x: np.ndarray, z: np.ndarray):
        self.arm = int(arm)
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)
        if self.x.ndim != 1 or self.z.ndim != 1:
            raise ValueError("x and z must be one-dimensional")
        if self.arm < 0:
            raise ValueError(f"arm index must be nonnegative, got {arm}")

    def dense(self, n_arms: int) -> np.ndarray:
        """Materialize the full (d1 + d2 * n_arms)-dimensional vector."""
        if self.arm >= n_arms:
            raise ValueError(f"arm {self.arm} out of range for {n_arms} arms")
        d1, d2 = self.x.shape[0], self.z.shape[0]
        out = np.zeros(d1 + d2 * n_arms)
        out[:d1] = self.x
        out[d1 + self.arm * d2 : d1 + (self.arm + 1) * d2] = self.z
        return out

    def __repr__(self) -> str:  # pragma: no cover
        return f"SparseHybridVector(arm={self.arm}, x={self.x!r}, z={self.z!r})"


class BlockDesign:
    """Regularized design matrix of the hybrid problem, held in block form.

    Tracks V (shared), W_i and B_i (per arm), pull counts and the round
    counter.  A lazily refreshed cache holds the inverse of the Schur
    complement ``V_eff = V - sum_i B_i W_i^{-1} B_i^T`` plus the stacked
    per-arm quantities needed for solves; it is invalidated by any update.
    """

    def __init__(self, d1: int, d2: int, n_arms: int, ridge: float):
        if min(d1, d2, n_arms) < 1:
            raise ValueError("d1, d2 and n_arms must be positive")
        if ridge <= 0:
            raise ValueError(f"ridge weight must be positive, got {ridge}")
        self.d1 = int(d1)
        self.d2 = int(d2)
        self.n_arms = int(n_arms)
        self.ridge = float(ridge)
        self.V = SymPosDef(d1, ridge)
        self.W = [SymPosDef(d2, ridge) for _ in range(n_arms)]
        self.B = np.zeros((n_arms, d1, d2))
        self.pull_counts = np.zeros(n_arms, dtype=np.int64)
        self.t = 0
        self._w_inv = np.repeat((np.eye(d2) / ridge)[None, :, :], n_arms, axis=0)
        self._cache: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.d1 + self.d2 * self.n_arms

    def _check_vector(self, u: SparseHybridVector) -> None:
        if u.x.shape != (self.d1,) or u.z.shape != (self.d2,):
            raise ValueError(
                f"feature dims {u.x.shape}/{u.z.shape} do not match design "
                f"({self.d1},)/({self.d2},)"
            )
        if not 0 <= u.arm < self.n_arms:
            raise ValueError(f"arm {u.arm} out of range for {self.n_arms} arms")

    def block_update(self, u: SparseHybridVector) -> None:
        """Add the rank-one term of one observation: V += x x^T, W_arm += z z^T, B_arm += x z^T."""
        self._check_vector(u)
        self.V.rank_one_update(u.x)
        self.W[u.arm].rank_one_update(u.z)
        self._w_inv[u.arm] = self.W[u.arm].inv_entries
        self.B[u.arm] += np.outer(u.x, u.z)
        self.pull_counts[u.arm] += 1
        self.t += 1
        self._cache = None

    def _schur(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (V_eff^{-1}, C, W_inv) with C_i = B_i W_i^{-1}, stacked over arms."""
        if self._cache is None:
            w_inv = self._w_inv
            c = self.B @ w_inv
            s = np.einsum("kab,kcb->ac", c, self.B)
            v_eff = self.V.entries - s
            v_eff = 0.5 * (v_eff + v_eff.T)
            f = np.linalg.inv(v_eff)
            self._cache = (0.5 * (f + f.T), c, w_inv)
        return self._cache

    def solve_blocks(self, b_shared: np.ndarray, b_arms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve M y = b for a block right-hand side (d1 part, (K, d2) arm parts)."""
        b_shared = np.asarray(b_shared, dtype=float)
        b_arms = np.asarray(b_arms, dtype=float)
        if b_shared.shape != (self.d1,) or b_arms.shape != (self.n_arms, self.d2):
            raise ValueError("right-hand side shape does not match design blocks")
        f, c, w_inv = self._schur()
        y0 = f @ (b_shared - np.einsum("kab,kb->a", c, b_arms))
        y_arms = np.einsum("kab,kb->ka", w_inv, b_arms) - np.einsum("kab,a->kb", c, y0)
        return y0, y_arms

    def solve_sparse(self, u: SparseHybridVector) -> np.ndarray:
        """Return ``M^{-1} u`` (as a dense (d1 + d2*K)-vector) for a sparse u."""
        self._check_vector(u)
        f, c, w_inv = self._schur()
        y0 = f @ (u.x - c[u.arm] @ u.z)
        y_arms = -np.einsum("kab,a->kb", c, y0)
        y_arms[u.arm] += w_inv[u.arm] @ u.z
        return np.concatenate([y0, y_arms.ravel()])

    def quad_form_inv(self, u: SparseHybridVector) -> float:
        """Return ``u^T M^{-1} u`` without touching the other arms' slots."""
        self._check_vector(u)
        f, c, w_inv = self._schur()
        w = u.x - c[u.arm] @ u.z
        val = float(w @ f @ w) + float(u.z @ w_inv[u.arm] @ u.z)
        return max(0.0, val)

    def quad_forms_per_arm(self, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
        """Quadratic forms ``u_i^T M^{-1} u_i`` for all arms at once.

        Row i of ``xs``/``zs`` is scored in arm i's own slot.
        """
        xs = np.asarray(xs, dtype=float)
        zs = np.asarray(zs, dtype=float)
        if xs.shape != (self.n_arms, self.d1) or zs.shape != (self.n_arms, self.d2):
            raise ValueError("expected per-arm feature stacks of shapes (K, d1) and (K, d2)")
        f, c, w_inv = self._schur()
        w = xs - np.einsum("kab,kb->ka", c, zs)
        vals = np.einsum("ka,ab,kb->k", w, f, w) + np.einsum("ka,kab,kb->k", zs, w_inv, zs)
        return np.maximum(vals, 0.0)

    def assemble_dense(self) -> np.ndarray:
        """Materialize the full (d1 + d2*K)^2 matrix (diagnostics/tests only)."""
        n = self.dim
        m = np.zeros((n, n))
        m[: self.d1, : self.d1] = self.V.entries
        for i in range(self.n_arms):
            sl = slice(self.d1 + i * self.d2, self.d1 + (i + 1) * self.d2)
            m[: self.d1, sl] = self.B[i]
            m[sl, : self.d1] = self.B[i].T
            m[sl, sl] = self.W[i].entries
        return m

    def sandwich_spectrum(self) -> tuple[float, float]:
        """Extreme eigenvalues of ``U^{-1/2} M U^{-1/2}`` with U = blockdiag(V, W_1..W_K).

        Equals (1, 1) exactly when all cross blocks vanish; otherwise the
        spectrum is symmetric about 1 and its spread measures how far M is
        from its block-diagonal part.
        """
        if not np.any(self.B):
            return (1.0, 1.0)
        blocks = [_inv_sqrt(self.V.entries)] + [_inv_sqrt(w.entries) for w in self.W]
        n = self.dim
        u_inv_half = np.zeros((n, n))
        u_inv_half[: self.d1, : self.d1] = blocks[0]
        for i in range(self.n_arms):
            sl = slice(self.d1 + i * self.d2, self.d1 + (i + 1) * self.d2)
            u_inv_half[sl, sl] = blocks[i + 1]
        g = u_inv_half @ self.assemble_dense() @ u_inv_half
        vals = sym_eigenvalues(0.5 * (g + g.T))
        return float(vals[0]), float(vals[-1])

    def copy(self) -> "BlockDesign":
        dup = BlockDesign.__new__(BlockDesign)
        dup.d1, dup.d2, dup.n_arms, dup.ridge = self.d1, self.d2, self.n_arms, self.ridge
        dup.V = self.V.copy()
        dup.W = [w.copy() for w in self.W]
        dup.B = self.B.copy()
        dup.pull_counts = self.pull_counts.copy()
        dup.t = self.t
        dup._w_inv = self._w_inv.copy()
        dup._cache = None
        return dup


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    if float(np.max(np.abs(a - a.T))) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def jacobi_eigh(a: np.ndarray, tol: float = _JACOBI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps Givens rotations over all index pairs until the off-diagonal
    Frobenius mass drops below ``tol`` times the matrix norm.  Returns
    eigenvalues in ascending order and the matching orthonormal eigenvectors
    as columns.
    """
    a = _check_symmetric(a).copy()
    n = a.shape[0]
    vecs = np.eye(n)
    if n == 1:
        return a[0].copy(), vecs
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n), vecs
    # Rotations with |a_pq| below this leave the off-diagonal mass within tol.
    skip = tol * norm / (10.0 * n * n)
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = float(np.sqrt(np.sum(a[off_mask] ** 2)))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p] = c * vp - s * vq
                vecs[:, q] = s * vp + c * vq
    else:  # pragma: no cover - cyclic Jacobi always converges in practice
        raise RuntimeError("Jacobi eigensolver failed to converge")
    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def sym_eigenvalues(a: np.ndarray, tol: float = _JACOBI_TOL) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending."""
    return jacobi_eigh(a, tol=tol)[0]


def _inv_sqrt(a: np.ndarray) -> np.ndarray:
    """Inverse square root of a symmetric positive definite matrix."""
    vals, vecs = jacobi_eigh(a)
    if vals[0] <= 0.0:
        raise ValueError("matrix is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def hermitian_dilation(b: np.ndarray) -> np.ndarray:
    """Symmetric dilation ``[[0, B], [B^T, 0]]`` of a rectangular matrix.

    Its eigenvalues are plus/minus the singular values of B (padded with
    zeros), which turns singular-value questions into symmetric eigenvalue
    ones.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {b.shape}")
    p, q = b.shape
    out = np.zeros((p + q, p + q))
    out[:p, p:] = b
    out[p:, :p] = b.T
    return out


def max_singular_value(b: np.ndarray) -> float:
    """Largest singular value of ``b``, via its Hermitian dilation."""
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return 0.0
    vals = sym_eigenvalues(hermitian_dilation(b))
    return float(vals[-1])
