"""Input validation helpers shared by the estimators."""

import warnings

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatch, InputError, RankDeficient

# Stream identifiers for replicate_rng; fixed so streams never collide.
STREAM_NETWORK = 0
STREAM_NOISE = 1
STREAM_DESIGN = 2
STREAM_BOOTSTRAP = 3
STREAM_CV = 4


def check_design(X, *, min_rows=None):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    n, p = X.shape
    if n < p:
        raise RankDeficient(f"design has {n} rows but {p} columns")
    if min_rows is not None and n < min_rows:
        raise DimensionMismatch(f"need at least {min_rows} rows, got {n}")
    return X


def check_response(y, n):
    y = check_array(y, dtype=np.float64, ensure_2d=False)
    if y.ndim != 1:
        raise DimensionMismatch("response must be one-dimensional")
    if y.shape[0] != n:
        raise DimensionMismatch(f"response has {y.shape[0]} entries, design has {n} rows")
    return y


def check_square_symmetric(S, n=None, *, tol=1e-10, name="matrix"):
    S = check_array(S, dtype=np.float64, ensure_2d=True)
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {S.shape}")
    if n is not None and S.shape[0] != n:
        raise DimensionMismatch(f"{name} is {S.shape[0]}x{S.shape[0]}, expected {n}x{n}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > tol * scale:
        raise InputError(f"{name} is not symmetric")
    return S


def standardize_columns(X):
    """Scale every column of ``X`` to Euclidean norm sqrt(n). No centering."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise RankDeficient("design contains an all-zero column")
    return X * (np.sqrt(X.shape[0]) / norms)


def warn_if_unstandardized(X, rtol=0.01):
    n = X.shape[0]
    norms = np.linalg.norm(X, axis=0) / np.sqrt(n)
    if np.any(np.abs(norms - 1.0) > rtol):
        warnings.warn(
            "design columns do not have norm sqrt(n); coefficients are reported "
            "on the raw column scale (pass standardize=True to rescale)",
            UserWarning,
            stacklevel=3,
        )


def replicate_rng(seed, replicate=0, stream=0):
    """Counter-based generator for one (seed, replicate, stream) triple.

    Streams are derived from a SeedSequence spawn key, so the draws for a
    replicate do not depend on which other replicates ran or in what order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(random_state):
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.default_rng()
    return replicate_rng(random_state)
