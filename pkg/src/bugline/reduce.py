"""PCA of a TF-IDF matrix down to a 2-D embedding."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .textvec import DocTermMatrix

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# Above this size the O(n^2)-rotations-per-sweep Python loop gets slow; LAPACK takes over.
JACOBI_MAX_DIM = 100
# Eigenvalues below this fraction of the largest are treated as zero.
RANK_RTOL = 1e-10


class ReduceError(ValueError):
    pass


class RankDeficientWarning(UserWarning):
    pass


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with eigenvalues descending and eigenvectors
    as the columns of ``vectors``. Stops once the off-diagonal Frobenius norm
    drops below ``tol`` (scaled by the matrix norm when that exceeds 1).
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def symmetric_eigh(a: np.ndarray):
    """Descending eigenpairs; Jacobi for small matrices, LAPACK otherwise."""
    if a.shape[0] <= JACOBI_MAX_DIM:
        return jacobi_eigh(a)
    values, vectors = np.linalg.eigh(a)
    return values[::-1].copy(), vectors[:, ::-1].copy()


def fix_sign(vector: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude coordinate (first on ties) is positive."""
    if vector[int(np.argmax(np.abs(vector)))] < 0:
        return -vector
    return vector


def _complete_basis(existing: list[np.ndarray], dim: int) -> np.ndarray:
    """A unit vector orthogonal to ``existing``, built from the best standard basis vector."""
    basis = np.eye(dim)
    residual = basis.copy()
    for _ in range(2):
        for e in existing:
            residual -= np.outer(residual @ e, e)
    norms = np.linalg.norm(residual, axis=1)
    best = int(np.argmax(norms))
    return residual[best] / norms[best]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # per-term column mean
    components: np.ndarray  # (n_components, n_terms), orthonormal rows
    explained_variance: np.ndarray  # descending, sample covariance (n - 1)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def _as_dense(matrix: DocTermMatrix | np.ndarray) -> np.ndarray:
    if isinstance(matrix, DocTermMatrix):
        return matrix.to_dense()
    return np.asarray(matrix, dtype=float)


def pca_fit(matrix: DocTermMatrix | np.ndarray, n_components: int = 2) -> PcaModel:
    x = _as_dense(matrix)
    n, p = x.shape
    if n < 2:
        raise ReduceError("insufficient documents")
    if n_components > min(n, p):
        raise ReduceError(f"n_components={n_components} exceeds min(n_docs={n}, n_terms={p})")
    mean = x.mean(axis=0)
    xc = x - mean

    if p > n:
        # Gram form: same non-zero spectrum, n x n instead of p x p.
        values, vectors = symmetric_eigh(xc @ xc.T)
        directions = (xc.T @ vectors[:, :n_components]).T
    else:
        values, vectors = symmetric_eigh(xc.T @ xc)
        directions = vectors[:, :n_components].T
    variances = np.maximum(values[:n_components], 0.0) / (n - 1)

    scale = float(np.max(np.abs(xc))) ** 2 if xc.size else 0.0
    floor = max(RANK_RTOL * float(variances[0]), 1e-24 * scale)
    components: list[np.ndarray] = []
    explained: list[float] = []
    deficient = 0
    for i in range(n_components):
        norm = float(np.linalg.norm(directions[i]))
        if variances[i] <= floor or norm == 0.0:
            deficient += 1
            components.append(fix_sign(_complete_basis(components, p)))
            explained.append(0.0)
        else:
            components.append(fix_sign(directions[i] / norm))
            explained.append(float(variances[i]))
    if deficient:
        warnings.warn(
            f"data rank below n_components={n_components}; "
            f"{deficient} component(s) filled from the orthogonal complement",
            RankDeficientWarning,
            stacklevel=2,
        )
    return PcaModel(mean, np.vstack(components), np.array(explained))


def pca_transform(model: PcaModel, matrix: DocTermMatrix | np.ndarray) -> np.ndarray:
    """Project rows onto the model's components; returns an ``(n_docs, n_components)`` array."""
    x = _as_dense(matrix)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.mean.shape[0]:
        raise ReduceError(f"term dimension {x.shape[1]} does not match model ({model.mean.shape[0]})")
    return (x - model.mean) @ model.components.T
