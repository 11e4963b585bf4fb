"""Feature encodings and preprocessing transforms (one-of-m, polynomial,
whitening, PCA) shared by the reward models and baselines."""

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import DomainError

# Dimensions whose sample variance falls below this floor are centered but
# not rescaled, so constant (e.g. all-zero binary) columns cannot blow up.
VARIANCE_FLOOR = 1e-10


def one_of_m_encode(index, m):
    """Length-m indicator vector with a single 1.0 at `index`."""
    if not 0 <= index < m:
        raise DomainError(f"index {index} out of range [0, {m})")
    v = np.zeros(m)
    v[index] = 1.0
    return v


def monomial_exponents(dim, degree):
    """Exponent tuples of all monomials with total degree <= degree.

    Ordering is graded lexicographic with the constant term first; equal
    inputs therefore always produce bit-identical feature vectors.
    """
    exps = []
    for g in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), g):
            e = [0] * dim
            for i in combo:
                e[i] += 1
            exps.append(tuple(e))
    return exps


def polynomial_features(x, degree):
    """All monomials of `x` up to total degree `degree`, constant first."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError("polynomial_features expects a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("polynomial_features requires finite input")
    if degree < 1:
        raise DomainError("degree must be a positive integer")
    out = np.empty(len(monomial_exponents(len(x), degree)))
    for j, exps in enumerate(monomial_exponents(len(x), degree)):
        term = 1.0
        for i, e in enumerate(exps):
            if e:
                term *= x[i] ** e
        out[j] = term
    return out


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map x -> transform @ (x - mean) with identity output covariance
    on non-degenerate dimensions."""

    mean: np.ndarray
    transform: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) @ self.transform.T

    def invert(self, y):
        return np.asarray(y, dtype=float) @ self._inverse().T + self.mean

    def _inverse(self):
        return np.linalg.inv(self.transform)


def fit_whitening(samples):
    """ZCA whitening from sample mean/covariance.

    Eigendirections with variance below VARIANCE_FLOOR keep unit gain, so a
    constant column comes out as a constant zero instead of noise.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("fit_whitening needs at least 2 equal-length samples")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, bias=True)
    cov = np.atleast_2d(cov)
    evals, evecs = np.linalg.eigh(cov)
    gains = np.where(evals > VARIANCE_FLOOR, 1.0 / np.sqrt(np.maximum(evals, VARIANCE_FLOOR)), 1.0)
    transform = (evecs * gains) @ evecs.T
    return WhiteningTransform(mean=mean, transform=transform)


@dataclass(frozen=True)
class PcaProjection:
    """Top-n principal subspace of a sample set; rows of `basis` are
    orthonormal components ordered by explained variance."""

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray


def fit_pca(samples, n):
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("fit_pca needs at least 2 equal-length samples")
    dim = x.shape[1]
    if not 1 <= n <= dim:
        raise DomainError(f"n={n} out of range [1, {dim}]")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n]
    basis = evecs[:, order].T.copy()
    # deterministic sign: first non-negligible entry of each component positive
    for row in basis:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return PcaProjection(mean=mean, basis=basis, explained_variance=evals[order].copy())


def apply_pca(projection, x):
    x = np.asarray(x, dtype=float)
    return (x - projection.mean) @ projection.basis.T
