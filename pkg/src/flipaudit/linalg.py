"""Dense linear-algebra kernel: pivoted QR, singular values, numerical rank, PCA.

Everything here operates on plain 2-D float64 numpy arrays (rows =
observations, columns = features) and returns new arrays; inputs are never
mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D array with at least one row and column")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class PivotedQr:
    """Column-pivoted QR factorization: d[:, permutation] = q @ r.

    ``permutation`` lists original column indices from most to least
    linearly independent; ``q`` has orthonormal columns and ``r`` is upper
    triangular with non-increasing diagonal magnitudes.
    """

    q: np.ndarray
    r: np.ndarray
    permutation: np.ndarray

    @property
    def diag_magnitudes(self) -> np.ndarray:
        return np.abs(np.diag(self.r))


def pivoted_qr(d) -> PivotedQr:
    """Householder QR with Businger-Golub column pivoting.

    At each step the remaining column of largest norm is swapped to the
    front, so dependent columns collect on the right and |r[i, i]| is
    non-increasing.
    """
    a = _as_matrix(d)
    m, n = a.shape
    k = min(m, n)
    r = a.copy()
    perm = np.arange(n)
    reflectors: list[np.ndarray] = []

    for j in range(k):
        norms = np.linalg.norm(r[j:, j:], axis=0)
        p = j + int(np.argmax(norms))
        if p != j:
            r[:, [j, p]] = r[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]

        x = r[j:, j]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            reflectors.append(np.zeros(m - j))
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0]) if x[0] != 0.0 else norm_x
        v /= np.linalg.norm(v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append(v)

    # Accumulate the thin Q by applying the reflectors in reverse to I[:, :k].
    q = np.zeros((m, k))
    q[:k, :k] = np.eye(k)
    for j in range(k - 1, -1, -1):
        v = reflectors[j]
        if v.any():
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])

    return PivotedQr(q=q, r=np.triu(r[:k, :]), permutation=perm)


def singular_values(d) -> np.ndarray:
    """Singular values of d, sorted descending."""
    a = _as_matrix(d)
    return np.linalg.svd(a, compute_uv=False)


def condition_number(d) -> float:
    """sigma_max / sigma_min, or +inf when sigma_min < 1e-14 * sigma_max."""
    s = singular_values(d)
    s_max = s[0]
    if s_max == 0.0:
        raise ValueError("condition number undefined for an all-zero matrix")
    s_min = s[-1]
    if s_min < 1e-14 * s_max:
        return math.inf
    return float(s_max / s_min)


def numerical_rank(d, tol: float = 1e-8) -> int:
    """Number of singular values >= tol * sigma_max."""
    if not (0.0 < tol < 1.0):
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    s = singular_values(d)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= tol * s[0]))


def rank_from_qr(qr: PivotedQr, tol: float = 1e-8) -> int:
    """Numerical rank estimated from the pivoted-QR diagonal."""
    if not (0.0 < tol < 1.0):
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    diag = qr.diag_magnitudes
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.count_nonzero(diag >= tol * diag[0]))


@dataclass(frozen=True)
class PcaResult:
    """Principal components of centered data.

    ``components`` holds one orthonormal component per row in descending
    order of explained variance; each row's largest-magnitude loading is
    oriented positive.
    """

    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray

    def project(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return (rows - self.mean) @ self.components.T


def pca(f) -> PcaResult:
    """Principal components via eigendecomposition of the sample covariance."""
    a = _as_matrix(f)
    if a.shape[0] < 2:
        raise ValueError("pca requires at least 2 rows")
    mean = a.mean(axis=0)
    centered = a - mean
    cov = centered.T @ centered / (a.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    components = evecs[:, order].T.copy()
    for row in components:
        if row[int(np.argmax(np.abs(row)))] < 0.0:
            row *= -1.0
    return PcaResult(components=components, explained_variance=evals, mean=mean)
