"""Dense linear-algebra and stochastic utilities used across the engine.

Everything here operates on float64 numpy arrays. Storage formats are
float32, but training-time math runs in float64 so that gradient checks
at 1e-4 relative tolerance are meaningful.
"""

from __future__ import annotations

import numpy as np

# Vectors with norm below this are treated as degenerate.
EPS_DEGENERATE = 1e-12


class DegenerateVectorError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    def __init__(self, pivot_index):
        self.pivot_index = pivot_index
        super().__init__(f"matrix is not positive-definite (pivot {pivot_index})")


def seeded_rng(seed, stream=0):
    """Deterministic generator for (seed, stream).

    Streams are split from the root seed so concurrent tasks can each own
    an independent, reproducible stream.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


def l2_normalize(v):
    """Scale v to unit length. Raises on near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n <= EPS_DEGENERATE:
        raise DegenerateVectorError("degenerate vector (norm <= 1e-12)")
    return v / n


def l2_normalize_rows(m):
    """Row-wise unit normalization of a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= EPS_DEGENERATE):
        bad = int(np.argmax(norms <= EPS_DEGENERATE))
        raise DegenerateVectorError(f"degenerate vector at row {bad}")
    return m / norms[:, None]


def cosine(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(l2_normalize(a), l2_normalize(b)))


def cholesky(a):
    """Lower-triangular L with L @ L.T == a for symmetric positive-definite a."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if np.max(np.abs(a - a.T)) > 1e-9 * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix is not symmetric")
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - np.dot(L[j, :j], L[j, :j])
        if d <= 0.0:
            raise NotPositiveDefiniteError(j)
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def sym_eig(a, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns). Orthonormality
    and the residual ||A v - lambda v|| are within 1e-8 * ||A||_inf.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = max(1.0, np.max(np.abs(a)))
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    A = a.copy()
    V = np.eye(n)
    tol = 1e-14 * scale
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol / max(1, n):
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        raise RuntimeError("Jacobi eigensolver did not converge in 100 sweeps")
    evals = np.diag(A).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], V[:, order]


def finite_diff_grad(f, theta, h=1e-5):
    """Central-difference gradient estimate of a scalar function.

    The independent oracle for every analytic gradient in the engine.
    """
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = h
        fp = f(theta + e)
        fm = f(theta - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at component {i}")
        g.flat[i] = (fp - fm) / (2.0 * h)
    return g
