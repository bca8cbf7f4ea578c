"""Subspace-projection regression with network effects.

The mean of ``Y`` is split into an overlap part ``X theta`` lying in both
``col(X)`` and the network subspace, a covariate part ``X beta`` and a
network part ``alpha``. The three parts are recovered by (generally
oblique) projections built from the principal angles between ``col(X)``
and the leading eigenvectors of an estimate of the relational matrix.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_design,
    check_response,
    standardize_columns,
    warn_if_unstandardized,
)
from .exceptions import (
    DegenerateDirection,
    DegreesOfFreedomExhausted,
    DimensionMismatch,
    InputError,
    NoNetworkComponent,
    NumericalError,
    SingularGammaCovariance,
)
from .network import ADJACENCY, NetworkEstimate, average_degree, network_estimate
from .rank import RankSelectionReport, select_r_bootstrap, select_r_threshold
from .spectral import alignment_svd, build_projections, orthonormal_basis

DEGENERATE_TOL = 1e-10
GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit`.

    ``r`` is either a fixed intersection dimension or one of
    ``"threshold"`` / ``"bootstrap"``. ``chisq_df_mode`` picks the degrees
    of freedom of the network-effect test: ``"dim_gamma"`` (K - r, the
    dimension of the whitened statistic) or ``"paper_K"`` (K).
    """

    K: int
    r: int | str = "bootstrap"
    alpha_level: float = 0.05
    chisq_df_mode: str = "dim_gamma"
    n_bootstrap: int = 50
    seed: int = 0

    def __post_init__(self):
        if int(self.K) < 1:
            raise InputError("K must be at least 1")
        if isinstance(self.r, str):
            if self.r not in ("threshold", "bootstrap"):
                raise InputError(f"unknown rank mode {self.r!r}")
        elif int(self.r) < 0:
            raise InputError("r must be non-negative")
        if not 0 < self.alpha_level < 1:
            raise InputError("alpha_level must lie in (0, 1)")
        if self.chisq_df_mode not in ("dim_gamma", "paper_K"):
            raise InputError(f"unknown chisq_df_mode {self.chisq_df_mode!r}")


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    sigma2_hat: float
    cov_beta: np.ndarray
    cov_theta: np.ndarray
    gamma_hat: np.ndarray
    gamma_cov: np.ndarray
    gamma0: np.ndarray
    chisq_stat: float
    chisq_df: int
    chisq_pvalue: float
    r_used: int
    K: int
    sigma_hat_values: np.ndarray
    fitted: np.ndarray
    design: np.ndarray = field(repr=False)
    projections: object = field(repr=False)
    rank_report: RankSelectionReport | None = None
    fallback: bool = False
    chisq_error: str | None = None

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    @property
    def dof(self):
        return self.n - self.p - self.K + self.r_used


def _choose_r(config, svd, Z, P_hat, n, p):
    K = int(config.K)
    if not isinstance(config.r, str):
        r = int(config.r)
        if r > min(p, K):
            raise InputError(f"r={r} exceeds min(p, K)={min(p, K)}")
        return r, None
    A = P_hat.adjacency
    if A is None:
        raise InputError("automatic r selection needs the observed adjacency matrix")
    if config.r == "threshold":
        report = select_r_threshold(svd.sigma_hat, average_degree(A), p, K, n)
    else:
        report = select_r_bootstrap(
            A, Z, K, B=config.n_bootstrap, seed=config.seed, sigma_hat=svd.sigma_hat,
            kind=P_hat.source, communities=P_hat.diagnostics.get("communities"),
        )
    return report.r_hat, report


def _whiten(gamma, cov, sigma2):
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals.size and vals.min() <= GAMMA_FLOOR * max(sigma2, 0.0):
        raise SingularGammaCovariance(
            f"covariance of gamma_hat has eigenvalue {vals.min():.3e}"
        )
    if vals.size and vals.min() <= 0:
        raise SingularGammaCovariance("covariance of gamma_hat is not positive definite")
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    return inv_sqrt @ gamma


def _chisq_df(config_mode, K, r):
    return K - r if config_mode == "dim_gamma" else K


def fit(X, Y, P_hat, config):
    """Fit the network regression model.

    Parameters
    ----------
    X : (n, p) array
        Design matrix; columns are expected to have norm ``sqrt(n)``.
    Y : (n,) array
    P_hat : NetworkEstimate or (n, n) array
        Estimate of the relational matrix. A bare array is treated as an
        adjacency matrix.
    config : FitConfig

    Returns
    -------
    FitResult
    """
    X = check_design(X)
    n, p = X.shape
    Y = check_response(Y, n)
    if not isinstance(P_hat, NetworkEstimate):
        P_hat = network_estimate(P_hat, ADJACENCY)
    if P_hat.n != n:
        raise DimensionMismatch(f"network has {P_hat.n} nodes, data has {n} rows")
    K = int(config.K)
    if K > n - 1:
        raise InputError("K must be at most n - 1")

    Z = orthonormal_basis(X)
    W_hat = P_hat.eigenvectors(K)
    svd = alignment_svd(Z, W_hat)
    r, report = _choose_r(config, svd, Z, P_hat, n, p)
    dof = n - p - K + r
    if dof <= 0:
        raise DegreesOfFreedomExhausted(f"n - p - K + r = {dof}")
    proj = build_projections(svd, r)

    yR, yC, yN = proj.components(Y)
    gamma_hat = proj.coordinates(Y)[1]
    fitted = yR + yC + yN
    resid = Y - fitted
    sigma2 = float(resid @ resid / dof)

    XtX = X.T @ X
    L_R = np.linalg.solve(XtX, X.T @ proj.Z_R)
    L_C = np.linalg.solve(XtX, X.T @ proj.Z_C)
    theta_hat = L_R @ (proj.Z_R.T @ Y)
    beta_hat = np.linalg.solve(XtX, X.T @ yC)
    cov_theta = sigma2 * (L_R @ L_R.T)
    cov_beta = sigma2 * (L_C @ proj.covariate_gram @ L_C.T)

    gamma_cov = sigma2 * proj.network_gram
    df = _chisq_df(config.chisq_df_mode, K, r)
    chisq_error = None
    try:
        if K - r == 0:
            raise NoNetworkComponent("K - r = 0: there is no network-only component to test")
        gamma0 = _whiten(gamma_hat, gamma_cov, sigma2)
        stat = float(gamma0 @ gamma0)
        pvalue = float(stats.chi2.sf(stat, df))
    except NumericalError as exc:
        gamma0 = np.full(K - r, np.nan)
        stat, pvalue = np.nan, np.nan
        chisq_error = f"{type(exc).__name__}: {exc}"

    return FitResult(
        theta_hat=theta_hat, beta_hat=beta_hat, alpha_hat=yN, sigma2_hat=sigma2,
        cov_beta=0.5 * (cov_beta + cov_beta.T), cov_theta=0.5 * (cov_theta + cov_theta.T),
        gamma_hat=gamma_hat, gamma_cov=gamma_cov, gamma0=gamma0, chisq_stat=stat,
        chisq_df=int(df), chisq_pvalue=pvalue, r_used=r, K=K,
        sigma_hat_values=svd.sigma_hat.copy(), fitted=fitted, design=X, projections=proj,
        rank_report=report, chisq_error=chisq_error,
    )


def network_effect_test(fit_result):
    """Chi-squared test of ``H0: alpha = 0``; returns ``(stat, df, pvalue)``."""
    if fit_result.K - fit_result.r_used == 0:
        raise NoNetworkComponent("K - r = 0: there is no network-only component to test")
    if fit_result.chisq_error is not None:
        gamma0 = _whiten(fit_result.gamma_hat, fit_result.gamma_cov, fit_result.sigma2_hat)
        stat = float(gamma0 @ gamma0)
        return stat, fit_result.chisq_df, float(stats.chi2.sf(stat, fit_result.chisq_df))
    return fit_result.chisq_stat, fit_result.chisq_df, fit_result.chisq_pvalue


def _normal_inference(estimate, unit_var, sigma2, n, level, what):
    # unit_var is omega^T Theta X~^T P P^T X~ Theta omega, free of sigma and n
    if not np.isfinite(unit_var) or np.sqrt(max(unit_var, 0.0)) < DEGENERATE_TOL:
        raise DegenerateDirection(f"{what} carries no identifiable signal")
    se = float(np.sqrt(sigma2 * unit_var / n))
    if se > 0:
        z = estimate / se
    else:
        z = 0.0 if estimate == 0 else float(np.sign(estimate) * np.inf)
    pvalue = float(2 * stats.norm.sf(abs(z)))
    half = stats.norm.ppf(1 - level / 2) * se
    return se, z, pvalue, estimate - half, estimate + half


def contrast_inference(fit_result, X, omega, level=0.05):
    """Normal-theory inference for the contrast ``omega^T beta``.

    Returns ``(estimate, std_error, ci_lo, ci_hi, z, pvalue)``; the interval
    has coverage ``1 - level``.
    """
    X = fit_result.design if X is None else np.asarray(X, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if abs(np.linalg.norm(omega) - 1) > 1e-8:
        raise InputError("omega must be a unit vector")
    n = X.shape[0]
    proj = fit_result.projections
    L_C = np.linalg.solve(X.T @ X, X.T @ proj.Z_C)
    v = L_C.T @ omega
    unit_var = float(n * v @ proj.covariate_gram @ v)
    est = float(omega @ fit_result.beta_hat)
    se, z, pvalue, lo, hi = _normal_inference(est, unit_var, fit_result.sigma2_hat, n, level,
                                              "contrast")
    return est, se, lo, hi, z, pvalue


def coefficient_test(fit_result, X, j, level=0.05):
    """Inference for a single ``beta_j``: ``(estimate, std_error, z, pvalue)``."""
    p = fit_result.beta_hat.size
    est, se, _, _, z, pvalue = contrast_inference(fit_result, X, np.eye(p)[j], level)
    return est, se, z, pvalue


def theta_inference(fit_result, X, j, level=0.05):
    X = fit_result.design if X is None else np.asarray(X, dtype=np.float64)
    n, p = X.shape
    proj = fit_result.projections
    L_R = np.linalg.solve(X.T @ X, X.T @ proj.Z_R)
    row = L_R[j]
    unit_var = float(n * row @ row)
    est = float(fit_result.theta_hat[j])
    se, z, pvalue, _, _ = _normal_inference(est, unit_var, fit_result.sigma2_hat, n, level,
                                            f"theta[{j}]")
    return est, se, z, pvalue


def confidence_interval(fit_result, j, level=0.05, X=None):
    p = fit_result.beta_hat.size
    _, _, lo, hi, _, _ = contrast_inference(fit_result, X, np.eye(p)[j], level)
    return lo, hi


def ols_constrained(fit_result, Y):
    """Refit with the network component removed (``gamma = 0``).

    The fitted values are the OLS fit of ``Y`` on ``X``; the coefficient is
    still split into its intersection (theta) and covariate-only (beta)
    parts.
    """
    X = fit_result.design
    n, p = X.shape
    proj = fit_result.projections
    XtX = X.T @ X
    Zc = proj.Z_C
    theta_hat = np.linalg.solve(XtX, X.T @ (proj.Z_R @ (proj.Z_R.T @ Y)))
    yC = Zc @ (Zc.T @ Y)
    beta_hat = np.linalg.solve(XtX, X.T @ yC)
    fitted = X @ (theta_hat + beta_hat)
    resid = Y - fitted
    sigma2 = float(resid @ resid / (n - p))
    L_C = np.linalg.solve(XtX, X.T @ Zc)
    L_R = np.linalg.solve(XtX, X.T @ proj.Z_R)
    Gc = np.eye(Zc.shape[1])
    proj0 = replace(proj, W_N=proj.W_N[:, :0], G_inv=Gc, K=proj.r)
    return replace(
        fit_result, theta_hat=theta_hat, beta_hat=beta_hat, alpha_hat=np.zeros(n),
        sigma2_hat=sigma2, cov_beta=sigma2 * (L_C @ L_C.T), cov_theta=sigma2 * (L_R @ L_R.T),
        fitted=fitted, projections=proj0, fallback=True,
    )


def model_guard_fit(X, Y, P_hat, config):
    """Fit, then fall back to the ``gamma = 0`` (OLS) fit when the network
    effect is not significant at ``config.alpha_level``."""
    result = fit(X, Y, P_hat, config)
    pvalue = result.chisq_pvalue
    if not np.isfinite(pvalue) or pvalue > config.alpha_level:
        return ols_constrained(result, np.asarray(Y, dtype=np.float64))
    return result


class SpectralProjectionRegressor(RegressorMixin, BaseEstimator):
    """Linear regression with nonparametric network effects.

    Parameters
    ----------
    n_components : int
        Dimension K of the network subspace.
    r : int or {"threshold", "bootstrap"}, default="bootstrap"
        Intersection dimension, fixed or selected from the data.
    network : {"adjacency", "laplacian", "sbm", "dcbm"}, default="adjacency"
        Which estimate of the relational matrix to build from the observed
        adjacency matrix. ``sbm``/``dcbm`` need ``communities`` at fit time.
    alpha : float, default=0.05
        Significance level for intervals and for the OLS fallback.
    chisq_df : {"dim_gamma", "paper_K"}, default="dim_gamma"
    n_bootstrap : int, default=50
    standardize : bool, default=False
        Rescale columns of X to norm sqrt(n) before fitting.
    fallback_to_ols : bool, default=False
        Return the OLS fit when the network effect is not significant.
    random_state : int, default=0

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
        Covariate effects beta.
    theta_ : ndarray of shape (p,)
    individual_effects_ : ndarray of shape (n,)
        Network effects alpha of the training nodes.
    sigma2_ : float
    r_ : int
    result_ : FitResult
    """

    def __init__(self, n_components=1, r="bootstrap", network="adjacency", alpha=0.05,
                 chisq_df="dim_gamma", n_bootstrap=50, standardize=False,
                 fallback_to_ols=False, random_state=0):
        self.n_components = n_components
        self.r = r
        self.network = network
        self.alpha = alpha
        self.chisq_df = chisq_df
        self.n_bootstrap = n_bootstrap
        self.standardize = standardize
        self.fallback_to_ols = fallback_to_ols
        self.random_state = random_state

    def _config(self):
        return FitConfig(K=self.n_components, r=self.r, alpha_level=self.alpha,
                         chisq_df_mode=self.chisq_df, n_bootstrap=self.n_bootstrap,
                         seed=0 if self.random_state is None else int(self.random_state))

    def fit(self, X, y, network=None, communities=None):
        if network is None:
            raise InputError("fit requires the network (adjacency matrix or NetworkEstimate)")
        X = check_design(X)
        if self.standardize:
            self.scale_ = np.sqrt(X.shape[0]) / np.linalg.norm(X, axis=0)
            X = standardize_columns(X)
        else:
            self.scale_ = np.ones(X.shape[1])
            warn_if_unstandardized(X)
        P_hat = network if isinstance(network, NetworkEstimate) else network_estimate(
            network, self.network, communities)
        guard = model_guard_fit if self.fallback_to_ols else fit
        res = guard(X, y, P_hat, self._config())
        self.result_ = res
        self.coef_ = res.beta_hat * self.scale_
        self.theta_ = res.theta_hat * self.scale_
        self.individual_effects_ = res.alpha_hat
        self.fitted_values_ = res.fitted
        self.sigma2_ = res.sigma2_hat
        self.r_ = res.r_used
        self.chisq_ = (res.chisq_stat, res.chisq_df, res.chisq_pvalue)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Mean response of the training nodes under new covariate values.

        Network effects are node-specific, so ``X`` must describe the same
        nodes (same rows, same order) as the training data.
        """
        check_is_fitted(self, "result_")
        X = check_design(X)
        if X.shape[0] != self.individual_effects_.shape[0]:
            raise DimensionMismatch("predict needs one row per training node")
        return X @ (self.coef_ + self.theta_) + self.individual_effects_

    def coefficient_table(self, level=None):
        """Per-coefficient rows: name index, theta, beta, se, z, p, ci."""
        check_is_fitted(self, "result_")
        level = self.alpha if level is None else level
        rows = []
        for j in range(self.result_.p):
            try:
                est, se, lo, hi, z, pv = contrast_inference(
                    self.result_, None, np.eye(self.result_.p)[j], level)
            except DegenerateDirection:
                est, se, lo, hi, z, pv = (float(self.result_.beta_hat[j]),) + (np.nan,) * 5
            s = self.scale_[j]
            rows.append({"theta": float(self.theta_[j]), "beta": est * s, "se": se * s,
                         "z": z, "p": pv, "ci_lo": lo * s, "ci_hi": hi * s})
        return rows
