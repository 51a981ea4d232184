"""Dense linear-algebra kernels: full SVD and Moore-Penrose pseudo-inverse.

The default SVD path is LAPACK (through numpy). A one-sided Jacobi
factorization is kept as an in-house fallback when LAPACK fails to converge,
and as an independent route for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_SCALE = 1e-12


class SvdConvergenceError(RuntimeError):
    """Raised when an iterative SVD does not converge."""

    def __init__(self, method: str, iterations: int):
        super().__init__(f"{method} SVD did not converge after {iterations} sweeps")
        self.method = method
        self.iterations = iterations


@dataclass(frozen=True)
class SvdFactors:
    """Full singular value decomposition ``a = left @ diag(singulars) @ right.T``.

    ``left`` is (rows, rows), ``right`` is (cols, cols) and ``singulars`` has
    length ``min(rows, cols)``, sorted non-increasing.
    """

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def sigma_matrix(self) -> np.ndarray:
        s = np.zeros((self.left.shape[0], self.right.shape[0]))
        k = self.singulars.size
        s[:k, :k] = np.diag(self.singulars)
        return s

    def reconstruct(self) -> np.ndarray:
        return self.left @ self.sigma_matrix() @ self.right.T


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _complete_basis(q: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns ``q`` (dim x k) to a full orthonormal basis."""
    k = q.shape[1]
    if k == dim:
        return q
    if k == 0:
        return np.eye(dim)
    full, _ = np.linalg.qr(q, mode="complete")
    full[:, :k] = q
    return full


def _jacobi_thin(a: np.ndarray, max_sweeps: int, tol: float):
    """One-sided Hestenes-Jacobi on a tall matrix. Returns (w, v, sweeps)."""
    w = a.copy()
    n = w.shape[1]
    v = np.eye(n)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = w[:, p] @ w[:, p]
                beta = w[:, q] @ w[:, q]
                gamma = w[:, p] @ w[:, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                wp = w[:, p].copy()
                w[:, p] = c * wp - s * w[:, q]
                w[:, q] = s * wp + c * w[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            return w, v, sweep
    raise SvdConvergenceError("jacobi", max_sweeps)


def jacobi_svd(a, max_sweeps: int = 60, tol: float = 1e-15) -> SvdFactors:
    """Full SVD by one-sided Jacobi rotations.

    Slow (pure Python inner loop) but independent of LAPACK.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if rows < cols:
        f = jacobi_svd(a.T, max_sweeps=max_sweeps, tol=tol)
        return SvdFactors(left=f.right, singulars=f.singulars, right=f.left)

    w, v, _ = _jacobi_thin(a, max_sweeps, tol)
    sing = np.linalg.norm(w, axis=0)
    order = np.argsort(-sing, kind="stable")
    sing = sing[order]
    w = w[:, order]
    v = v[:, order]

    smax = sing[0] if sing.size else 0.0
    keep = sing > max(rows, cols) * np.finfo(float).eps * smax
    if smax == 0.0:
        keep[:] = False
    r = int(keep.sum())
    u_part = w[:, :r] / sing[:r]
    # Re-orthonormalize against rounding; columns already nearly orthogonal.
    u_part, rr = np.linalg.qr(u_part)
    u_part = u_part * np.sign(np.diag(rr))
    sing = np.where(keep, sing, 0.0)
    left = _complete_basis(u_part, rows)
    return SvdFactors(left=left, singulars=sing, right=v)


def svd(a, method: str = "lapack") -> SvdFactors:
    """Full (not thin) SVD of ``a``.

    ``method="lapack"`` uses numpy's divide-and-conquer driver and falls back
    to :func:`jacobi_svd` if LAPACK reports non-convergence.
    """
    a = as_matrix(a)
    if method == "jacobi":
        return jacobi_svd(a)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError:
        return jacobi_svd(a)
    return SvdFactors(left=u, singulars=s, right=vt.T)


def default_rank_tol(shape) -> float:
    return max(shape) * EPS_SCALE


def pinv(a, tol: float | None = None, scale: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse.

    Singular values below ``tol * max(sigma_max, scale)`` are treated as zero;
    ``tol`` defaults to ``max(rows, cols) * 1e-12``. Passing ``scale`` lets a
    matrix that is tiny relative to its context count as rank deficient.
    """
    a = as_matrix(a)
    if tol is None:
        tol = default_rank_tol(a.shape)
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = svd(a)
    s = f.singulars
    k = s.size
    if k == 0 or s[0] == 0.0:
        return np.zeros(a.shape[::-1])
    ref = s[0] if scale is None else max(s[0], float(scale))
    keep = s > tol * ref
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (f.right[:, :k] * inv) @ f.left[:, :k].T


def penrose_residuals(a, a_pinv) -> tuple[float, float, float, float]:
    """Relative Frobenius residuals of the four Penrose conditions."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(a_pinv, dtype=float)

    def rel(lhs, rhs):
        # Rescale first so huge pseudo-inverse entries do not overflow the norm.
        s = np.abs(rhs).max(initial=0.0)
        if s == 0.0:
            return float(np.linalg.norm(lhs))
        return float(np.linalg.norm((lhs - rhs) / s) / np.linalg.norm(rhs / s))

    ag = a @ g
    ga = g @ a
    return (rel(ag @ a, a), rel(ga @ g, g), rel(ag.T, ag), rel(ga.T, ga))


def cond(a) -> float:
    """2-norm condition number; ``inf`` for singular input."""
    s = svd(a).singulars
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])
