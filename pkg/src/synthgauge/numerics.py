"""Dense linear algebra and neighbour queries used by the other modules."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, NumericalError, ValidationError

SYM_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
NEG_EIG_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order; ``vectors[:, i]`` pairs with ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def as_sym_matrix(m, name="matrix"):
    """Validate ``m`` as a finite symmetric square matrix and return it as float64."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"{name}: expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name}: contains non-finite entries")
    asym = np.max(np.abs(m - m.T))
    if asym > SYM_TOL:
        raise ValidationError(f"{name}: not symmetric (max |m - m^T| = {asym:.3e})")
    return m


def fix_signs(vectors, tol=1e-12):
    """Flip columns so the first component with magnitude above ``tol`` is positive."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    for i in range(vectors.shape[1]):
        col = vectors[:, i]
        big = np.flatnonzero(np.abs(col) > tol * max(1.0, np.max(np.abs(col))))
        if big.size and col[big[0]] < 0:
            vectors[:, i] = -col
    return vectors


def sym_eig(m, name="matrix"):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Values are sorted descending; eigenvector signs follow :func:`fix_signs`
    so results are stable across runs and backends.
    """
    m = as_sym_matrix(m, name)
    values, vectors, sweeps = _kernels.jacobi(m, JACOBI_MAX_SWEEPS, JACOBI_TOL)
    if sweeps < 0:
        raise NumericalError(f"{name}: Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(values[order], fix_signs(vectors[:, order]))


def sqrtm_spd(m, name="matrix"):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-10 * max(1, |m|_2), 0) are treated as roundoff and
    clamped to zero; anything more negative raises :class:`DomainError`.
    """
    eig = sym_eig(m, name)
    lam = eig.values
    floor = -NEG_EIG_TOL * max(1.0, float(np.max(np.abs(lam))))
    if lam[-1] < floor:
        raise DomainError(f"{name}: not positive semi-definite (eigenvalue {lam[-1]:.3e})")
    root = np.sqrt(np.clip(lam, 0.0, None))
    out = (eig.vectors * root) @ eig.vectors.T
    return 0.5 * (out + out.T)


def mean_cov(x):
    """Sample mean and unbiased (N-1) covariance of the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"mean_cov: expected an N x D matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValidationError(f"mean_cov: need at least 2 samples, got {x.shape[0]}")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (x.shape[0] - 1)
    return mu, 0.5 * (cov + cov.T)


def pairwise_distances(a, b, metric="euclidean"):
    """Dense distance matrix between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if metric == "euclidean":
        return np.sqrt(_kernels.sq_dists(a, b))
    if metric == "sqeuclidean":
        return _kernels.sq_dists(a, b)
    if metric == "cosine":
        _check_nonzero_rows(a, "points")
        _check_nonzero_rows(b, "queries")
        return _kernels.cosine_dists(a, b)
    raise ValidationError(f"unknown metric {metric!r}")


def _check_nonzero_rows(x, what):
    norms = np.sqrt(np.sum(x * x, axis=1))
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise DomainError(f"cosine distance undefined for zero-norm row {bad[0]} of {what}")


def knn_distance(points, queries=None, k=1, metric="euclidean"):
    """Distance from each query to its k-th nearest point.

    With ``queries=None`` the points are queried against themselves and each
    point's own entry is excluded (by index, so exact duplicates still count
    as neighbours at distance 0).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    self_query = queries is None
    n = points.shape[0]
    available = n - 1 if self_query else n
    if k < 1 or k > available:
        raise ValidationError(f"k={k} out of range for {available} candidate points")
    q = points if self_query else np.atleast_2d(np.asarray(queries, dtype=np.float64))
    d = pairwise_distances(q, points, metric)
    if self_query:
        np.fill_diagonal(d, np.inf)
    return np.partition(d, k - 1, axis=1)[:, k - 1]


def cosine_distance(u, v):
    """1 - cos(u, v), clipped to [0, 2]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValidationError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.sqrt(np.dot(u, u))
    nv = np.sqrt(np.dot(v, v))
    if nu <= 1e-12 or nv <= 1e-12:
        raise DomainError("cosine distance undefined for a zero-norm vector")
    return float(min(max(1.0 - np.dot(u, v) / (nu * nv), 0.0), 2.0))
