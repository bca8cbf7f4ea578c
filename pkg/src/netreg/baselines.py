"""Comparison regressors: ordinary least squares, the linear-in-means
social interaction model (SIM), and regression with network cohesion (RNC).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import STREAM_CV, check_design, check_response, check_square_symmetric, replicate_rng
from .exceptions import IsolatedNodes, IsolatedNodeWarning, SingularSystem
from .spectral import orthonormal_basis

DEFAULT_GAMMA_GRID = np.round(np.arange(-0.99, 0.99 + 1e-9, 0.01), 2)
DEFAULT_LAMBDA_GRID = np.logspace(-4, 4, 17)
# separates the constant part of mu from an intercept in col(X)
RNC_RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class BaselineFit:
    method: str
    fitted_values: np.ndarray
    coefficients: dict
    tuning: dict = field(default_factory=dict)


def _column_basis(D, rtol=1e-10):
    # orthonormal basis of col(D), tolerating collinear columns
    U, s, _ = np.linalg.svd(D, full_matrices=False)
    keep = s > rtol * (s[0] if s.size else 0.0)
    return U[:, keep]


def fit_ols(X, Y):
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    orthonormal_basis(X)  # raises RankDeficient
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return BaselineFit("ols", X @ beta, {"beta": beta})


def random_walk_operator(A):
    """``D^{-1} A`` with zero rows for isolated nodes; also returns the
    isolated-node mask."""
    deg = A.sum(axis=1)
    isolated = deg <= 0
    inv = np.where(isolated, 0.0, 1.0 / np.where(isolated, 1.0, deg))
    return A * inv[:, None], isolated


def fit_sim(X, Y, A, gamma_grid=None, *, drop_isolated=True, fixed_gamma=None, exogenous=True):
    """Profile least squares for ``Y = gamma L Y + X beta + (L X) eta + eps``.

    ``L`` is the random-walk operator ``D^{-1} A``. For each ``gamma`` on the
    grid, ``(I - gamma L) Y`` is regressed on ``(X, L X)``; the ``gamma``
    with the smallest residual sum of squares wins.
    """
    X = check_design(X)
    n, p = X.shape
    Y = check_response(Y, n)
    A = check_square_symmetric(A, n, name="adjacency matrix")
    L, isolated = random_walk_operator(A)
    if isolated.any():
        if not drop_isolated:
            raise IsolatedNodes(f"{int(isolated.sum())} isolated node(s)")
        warnings.warn(f"{int(isolated.sum())} isolated node(s) excluded from the SIM fit",
                      IsolatedNodeWarning, stacklevel=2)
    keep = ~isolated
    LY = L @ Y
    design = np.hstack([X, L @ X]) if exogenous else X
    grid = np.asarray(DEFAULT_GAMMA_GRID if gamma_grid is None else gamma_grid, dtype=float)
    if fixed_gamma is not None:
        grid = np.array([float(fixed_gamma)])

    D_k = design[keep]
    Q = _column_basis(D_k)
    rY = Y[keep] - Q @ (Q.T @ Y[keep])
    rL = LY[keep] - Q @ (Q.T @ LY[keep])
    rss = np.array([np.sum((rY - g * rL) ** 2) for g in grid])
    gamma = float(grid[int(np.argmin(rss))])
    coef, *_ = np.linalg.lstsq(D_k, Y[keep] - gamma * LY[keep], rcond=None)
    fitted = gamma * LY + design @ coef
    coefs = {"gamma": gamma, "beta": coef[:p], "eta": coef[p:] if exogenous else np.zeros(p)}
    return BaselineFit("sim", fitted, coefs,
                       {"gamma_grid": grid, "rss": rss, "isolated": int(isolated.sum())})


def graph_laplacian(A):
    return np.diag(A.sum(axis=1)) - A


def _rnc_solve(X, Y, L, lam, train=None):
    # min sum_{i in train} (y_i - x_i b - mu_i)^2 + lam mu^T L mu + ridge |mu|^2
    n, p = X.shape
    if train is None:
        train = np.ones(n, dtype=bool)
    S = train.astype(np.float64)
    Xt = X * S[:, None]
    top = np.hstack([Xt.T @ X, Xt.T])
    bottom = np.hstack([Xt, np.diag(S) + lam * L + RNC_RIDGE * np.eye(n)])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([Xt.T @ Y, S * Y])
    try:
        c, low = sla.cho_factor(M, check_finite=False)
        sol = sla.cho_solve((c, low), rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"penalized system singular at lambda={lam:g}") from exc
    return sol[:p], sol[p:]


def rnc_objective(X, Y, L, lam, beta, mu):
    res = Y - X @ beta - mu
    return float(res @ res + lam * mu @ L @ mu)


def fit_rnc(X, Y, A, lambda_grid=None, cv_folds=10, seed=0):
    """Regression with a Laplacian cohesion penalty on individual effects,
    with ``lambda`` chosen by K-fold cross-validation.

    Held-out nodes keep their place in the penalty, so their effects are
    filled in from their neighbors.
    """
    X = check_design(X)
    n, p = X.shape
    Y = check_response(Y, n)
    A = check_square_symmetric(A, n, name="adjacency matrix")
    L = graph_laplacian(A)
    grid = np.asarray(DEFAULT_LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float)

    rng = replicate_rng(seed, 0, STREAM_CV)
    folds = np.empty(n, dtype=int)
    folds[rng.permutation(n)] = np.arange(n) % cv_folds
    cv_err = np.full(grid.size, np.inf)
    for i, lam in enumerate(grid):
        errs = []
        try:
            for f in range(cv_folds):
                test = folds == f
                beta, mu = _rnc_solve(X, Y, L, lam, train=~test)
                pred = X[test] @ beta + mu[test]
                errs.append(np.mean((Y[test] - pred) ** 2))
        except SingularSystem:
            continue
        cv_err[i] = float(np.mean(errs))
    if not np.isfinite(cv_err).any():
        raise SingularSystem("penalized system singular for every lambda")
    lam = float(grid[int(np.argmin(cv_err))])
    beta, mu = _rnc_solve(X, Y, L, lam)
    return BaselineFit("rnc", X @ beta + mu, {"beta": beta, "mu": mu},
                       {"lambda": lam, "lambda_grid": grid, "cv_error": cv_err,
                        "cv_folds": cv_folds})


class _BaselineRegressor(RegressorMixin, BaseEstimator):
    def _store(self, res):
        self.result_ = res
        self.coef_ = res.coefficients["beta"]
        self.fitted_values_ = res.fitted_values
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_design(X)
        return X @ self.coef_ + self._node_offset(X)

    def _node_offset(self, X):
        return 0.0


class OLSRegressor(_BaselineRegressor):
    """Least squares without an implicit intercept."""

    def fit(self, X, y, network=None):
        return self._store(fit_ols(X, y))


class SIMRegressor(_BaselineRegressor):
    def __init__(self, gamma_grid=None, drop_isolated=True):
        self.gamma_grid = gamma_grid
        self.drop_isolated = drop_isolated

    def fit(self, X, y, network=None):
        res = fit_sim(X, y, network, self.gamma_grid, drop_isolated=self.drop_isolated)
        self.gamma_ = res.coefficients["gamma"]
        self.eta_ = res.coefficients["eta"]
        return self._store(res)

    def predict(self, X):
        # the endogenous term depends on observed responses; in-sample only
        check_is_fitted(self, "result_")
        return self.fitted_values_


class RNCRegressor(_BaselineRegressor):
    def __init__(self, lambda_grid=None, cv_folds=10, random_state=0):
        self.lambda_grid = lambda_grid
        self.cv_folds = cv_folds
        self.random_state = random_state

    def fit(self, X, y, network=None):
        res = fit_rnc(X, y, network, self.lambda_grid, self.cv_folds, self.random_state)
        self.lambda_ = res.tuning["lambda"]
        self.individual_effects_ = res.coefficients["mu"]
        return self._store(res)

    def _node_offset(self, X):
        if X.shape[0] != self.individual_effects_.shape[0]:
            raise ValueError("predict needs one row per training node")
        return self.individual_effects_
