"""Encoding-quality metrics for learned representations."""

import numpy as np

from .errors import DomainError, MetricUndefinedError

VARIANCE_EPS = 1e-12


def nrmse_fit(internal, actual):
    """Normalized RMSE of the best affine map from `internal` to `actual`.

    0 means the internal representation encodes the target perfectly up to
    an affine transform; around 1 means it does not encode it at all (the
    fit cannot beat predicting the mean).
    """
    internal = np.atleast_2d(np.asarray(internal, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if internal.ndim != 2 or actual.ndim != 2 or internal.shape[0] != actual.shape[0]:
        raise DomainError("internal and actual must be equal-length lists of vectors")
    n, d_in = internal.shape
    if n < d_in + 2:
        raise DomainError(f"need at least dim+2 = {d_in + 2} samples, got {n}")
    total_var = float(np.sum(actual.var(axis=0)))
    if total_var < VARIANCE_EPS:
        raise MetricUndefinedError("target variance is degenerate")
    design = np.hstack([internal, np.ones((n, 1))])
    coef, *_ = np.linalg.lstsq(design, actual, rcond=None)
    resid = design @ coef - actual
    rmse = np.sqrt(float(np.mean(np.sum(resid ** 2, axis=1))))
    return rmse / np.sqrt(total_var)


def pc1_axis_nrmse(internal, actual_scalar):
    """NRMSE of the target scalar predicted from only the highest-variance
    principal component of the internal representation."""
    internal = np.atleast_2d(np.asarray(internal, dtype=float))
    actual = np.asarray(actual_scalar, dtype=float).reshape(-1, 1)
    centered = internal - internal.mean(axis=0)
    cov = np.atleast_2d(np.cov(centered, rowvar=False, bias=True))
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, np.argmax(evals)]
    scores = centered @ axis
    return nrmse_fit(scores.reshape(-1, 1), actual)
