"""Monte Carlo experiments on block-model networks: inference quality
(bias-SD ratio, interval coverage, chi-squared calibration), estimation
error against comparison methods, and concentration of the perturbed
network projection.
"""

import csv
import io
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed
from sklearn.cluster import KMeans

from ._validation import (
    STREAM_DESIGN,
    STREAM_NETWORK,
    STREAM_NOISE,
    replicate_rng,
)
from .baselines import fit_ols, fit_rnc, fit_sim
from .estimator import FitConfig, contrast_inference, fit, model_guard_fit
from .exceptions import ConstraintViolation, InputError, NetRegError
from .network import (
    ADJACENCY,
    DCBM,
    DCBM_LAPLACIAN,
    LAPLACIAN,
    SBM,
    SBM_LAPLACIAN,
    _factored_eigvectors,
    laplacian,
    network_estimate,
    sample_inhomogeneous_er,
)
from .spectral import alignment_svd, orthonormal_basis

SP_METHODS = {
    "SP": ADJACENCY,
    "SP-SBM": SBM,
    "SP-DCBM": DCBM,
    "SP-L": LAPLACIAN,
    "SP-SBM-L": SBM_LAPLACIAN,
    "SP-DCBM-L": DCBM_LAPLACIAN,
}
BASELINE_METHODS = ("OLS", "SIM", "RNC")
ALL_METHODS = tuple(SP_METHODS) + BASELINE_METHODS

DENSITY_ALIASES = {
    "two_log_n": "two_log_n", "2logn": "two_log_n",
    "sqrt_n": "sqrt_n", "sqrt": "sqrt_n",
    "n_two_thirds": "n_two_thirds", "n23": "n_two_thirds",
}
CONSTRAINT_TOL = 1e-8


def density_target(n, density):
    """Average expected degree for a named density schedule or a number."""
    if isinstance(density, str):
        key = DENSITY_ALIASES.get(density)
        if key is None:
            raise InputError(f"unknown density {density!r}")
        d = {"two_log_n": 2 * np.log(n), "sqrt_n": np.sqrt(n),
             "n_two_thirds": n ** (2 / 3)}[key]
    else:
        d = float(density)
    if not 0 < d < n:
        raise InputError(f"average degree {d:g} outside (0, n)")
    return float(d)


def default_block_matrix(k):
    return 0.2 * np.ones((k, k)) + 0.8 * np.eye(k)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell.

    ``effect_scale`` multiplies the unit-norm-per-coordinate network effect
    (``W gamma`` or the Laplacian eigenvector average); ``None`` means
    ``sqrt(n)``. ``r`` is ``"known"`` (the population intersection
    dimension), an integer, or an automatic rule name.
    """

    n: int = 1000
    p: int = 4
    K: int = 4
    network: str = "sbm"
    density: str | float = "sqrt_n"
    design: str = "eigenspace"
    effects: str = "eigenspace"
    beta: tuple = (0.0, 1.0, 1.0, 1.0)
    theta: tuple = (1.0, 0.0, 0.0, 0.0)
    gamma: tuple = (0.0, 1.0, 1.0, 1.0)
    effect_scale: float | None = None
    noise_sigma2: float = 1.0
    reps: int = 50
    seed: int = 0
    methods: tuple = ("SP", "SP-SBM")
    r: int | str = "known"
    n_bootstrap: int = 50
    nu_range: tuple = (0.2, 1.0)
    community_labels: str = "oracle"

    def __post_init__(self):
        if self.reps < 1:
            raise InputError("reps must be at least 1")
        if self.network not in ("sbm", "dcbm"):
            raise InputError(f"unknown network model {self.network!r}")
        if self.design not in ("eigenspace", "random_covariates"):
            raise InputError(f"unknown design {self.design!r}")
        if self.effects not in ("eigenspace", "zero_gamma", "smooth"):
            raise InputError(f"unknown effects {self.effects!r}")
        if self.design == "eigenspace" and self.p > self.K:
            raise InputError("the eigenspace design needs p <= K")
        for name in ("beta", "theta"):
            if len(getattr(self, name)) != self.p:
                raise InputError(f"{name} must have length p")
        if len(self.gamma) != self.K:
            raise InputError("gamma must have length K")
        if self.community_labels not in ("oracle", "spectral"):
            raise InputError(f"unknown community_labels {self.community_labels!r}")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise InputError(f"unknown methods {sorted(unknown)}")
        density_target(self.n, self.density)

    @property
    def avg_degree(self):
        return density_target(self.n, self.density)

    @property
    def scale(self):
        return np.sqrt(self.n) if self.effect_scale is None else float(self.effect_scale)

    def population_key(self):
        return (self.n, self.p, self.K, self.network, self.avg_degree, self.design, self.seed,
                tuple(self.nu_range))


@dataclass(frozen=True, eq=False)
class Population:
    P: np.ndarray
    communities: np.ndarray
    nu: np.ndarray | None
    kappa: float
    W: np.ndarray
    X: np.ndarray
    W_breve: np.ndarray
    sigma: np.ndarray
    r: int

    @property
    def d_max(self):
        """``n * max P_ij``, the density used by the concentration bound."""
        return float(self.P.shape[0] * self.P.max())


def _balanced_labels(n, k):
    return np.arange(n) * k // n


def _orthonormal_complement(W, m, rng):
    G = rng.standard_normal((W.shape[0], m))
    G -= W @ (W.T @ G)
    G -= W @ (W.T @ G)
    Q, _ = np.linalg.qr(G)
    return Q


def _standardize(v):
    return v * (np.sqrt(v.size) / np.linalg.norm(v))


@lru_cache(maxsize=8)
def _population(key):
    n, p, K, network, d_bar, design, seed, nu_range = key
    rng = replicate_rng(seed, 0, STREAM_DESIGN)
    g = _balanced_labels(n, K)
    B0 = default_block_matrix(K)
    F = np.zeros((n, K))
    nu = None
    if network == "dcbm":
        nu = rng.uniform(nu_range[0], nu_range[1], n)
        sums = np.bincount(g, weights=nu, minlength=K)
        counts = np.bincount(g, minlength=K)
        nu = nu * counts[g] / sums[g]
        F[np.arange(n), g] = nu
    else:
        F[np.arange(n), g] = 1.0
    P0 = F @ B0 @ F.T
    off_diag = (P0.sum() - np.trace(P0)) / n
    kappa = d_bar / off_diag
    if kappa * P0.max() > 1:
        raise InputError(f"average degree {d_bar:g} not attainable with this block model")
    P = kappa * P0
    W = _factored_eigvectors(F, kappa * B0, K).matrix

    if design == "eigenspace":
        extra = _orthonormal_complement(W, p - 1, rng)
        X = np.empty((n, p))
        X[:, 0] = np.sqrt(n) * W[:, 0]
        for j in range(1, p):
            X[:, j] = np.sqrt(n) * (0.2 * W[:, j] + np.sqrt(24 / 25) * extra[:, j - 1])
    else:
        draws = [rng.standard_normal(n), rng.uniform(0, 1, n), rng.exponential(1.0, n)]
        X = np.empty((n, p))
        X[:, 0] = np.sqrt(n) * W[:, 0]
        for j in range(1, p):
            X[:, j] = _standardize(draws[(j - 1) % 3] if j <= 3 else rng.standard_normal(n))
    svd = alignment_svd(orthonormal_basis(X), W)
    r = int(np.sum(svd.sigma_hat >= 1 - 1e-8))
    for arr in (P, W, X, svd.W_breve, svd.sigma_hat):
        arr.setflags(write=False)
    return Population(P=P, communities=g, nu=nu, kappa=float(kappa), W=W, X=X,
                      W_breve=svd.W_breve, sigma=svd.sigma_hat, r=r)


def population(config):
    """Fixed population quantities of a cell: P, W, X and the alignment of
    col(X) with the network subspace."""
    return _population(config.population_key())


def smooth_effect(A, m=3):
    """Average of the eigenvectors of the Laplacian of ``A`` belonging to its
    ``m`` smallest nonzero eigenvalues."""
    L = laplacian(A).matrix
    vals, vecs = np.linalg.eigh(L)
    scale = max(abs(vals[-1]), 1.0)
    nonzero = np.flatnonzero(vals > 1e-8 * scale)[:m]
    return vecs[:, nonzero].mean(axis=1), vals[nonzero]


def check_constraints(X, theta, beta, alpha, pop, tol=CONSTRAINT_TOL):
    """Identifiability constraints of the eigenspace design: alpha lies in the
    network subspace outside its overlap with col(X), X beta is orthogonal
    to the overlap and X theta lies in it."""
    Z_R = pop.W_breve[:, :pop.r]
    W = pop.W
    scale = max(np.linalg.norm(X @ beta), np.linalg.norm(X @ theta), np.linalg.norm(alpha), 1.0)
    checks = {
        "alpha in network subspace": np.linalg.norm(alpha - W @ (W.T @ alpha)),
        "alpha orthogonal to overlap": np.linalg.norm(Z_R.T @ alpha),
        "X beta orthogonal to overlap": np.linalg.norm(Z_R.T @ (X @ beta)),
        "X theta in overlap": np.linalg.norm(X @ theta - Z_R @ (Z_R.T @ (X @ theta))),
    }
    for name, err in checks.items():
        if err > tol * scale:
            raise ConstraintViolation(f"{name}: violation {err:.3e}")


def build_scenario(config, replicate):
    """Draw one replicate of a cell.

    Returns ``(X, Y, A, truth)``; ``truth`` holds ``EY``, ``alpha``,
    ``beta``, ``theta``, the community labels and the population object.
    The design is fixed across replicates; the network and the noise are
    redrawn from the replicate's own streams.
    """
    pop = population(config)
    n = config.n
    A = sample_inhomogeneous_er(pop.P, replicate_rng(config.seed, replicate, STREAM_NETWORK))
    X = np.array(pop.X)
    beta = np.asarray(config.beta, dtype=float)
    theta = np.asarray(config.theta, dtype=float)
    if config.effects == "zero_gamma":
        alpha = np.zeros(n)
    elif config.effects == "eigenspace":
        gamma = np.asarray(config.gamma, dtype=float)
        if np.any(gamma[:pop.r] != 0):
            raise ConstraintViolation("gamma must vanish on the overlap coordinates")
        alpha = config.scale * (pop.W_breve @ gamma)
    else:
        alpha = config.scale * smooth_effect(A)[0]
    if config.design == "eigenspace" and config.effects != "smooth":
        check_constraints(X, theta, beta, alpha, pop)
    EY = X @ (beta + theta) + alpha
    noise = replicate_rng(config.seed, replicate, STREAM_NOISE).standard_normal(n)
    Y = EY + np.sqrt(config.noise_sigma2) * noise
    truth = {"EY": EY, "alpha": alpha, "beta": beta, "theta": theta,
             "communities": pop.communities, "population": pop}
    return X, Y, A, truth


def _rank_setting(config, pop):
    if config.r == "known":
        return pop.r
    return config.r


def spectral_communities(A, k, seed=0):
    """k-means on the ``k`` leading eigenvectors of ``A``."""
    V = network_estimate(A, ADJACENCY).eigenvectors(k).matrix
    return KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(V)


def _communities(method, A, truth, config, cache):
    if config.community_labels == "oracle" or SP_METHODS[method] in (ADJACENCY, LAPLACIAN):
        return truth["communities"]
    if "labels" not in cache:
        cache["labels"] = spectral_communities(A, config.K, config.seed)
    return cache["labels"]


def _sp_fit(method, X, Y, A, truth, config, guard, cache=None):
    kind = SP_METHODS[method]
    cache = {} if cache is None else cache
    P_hat = network_estimate(A, kind, _communities(method, A, truth, config, cache))
    cfg = FitConfig(K=config.K, r=_rank_setting(config, truth["population"]),
                    n_bootstrap=config.n_bootstrap, seed=config.seed)
    return (model_guard_fit if guard else fit)(X, Y, P_hat, cfg)


def conditional_bias_sd(res, X, truth, sigma2):
    """``|E(beta_hat | A) - beta| / sd(beta_hat | A)`` per coordinate, with
    the expectation over the noise only and the true noise variance."""
    proj = res.projections
    XtX = X.T @ X
    yC = proj.components(truth["EY"])[1]
    bias = np.linalg.solve(XtX, X.T @ yC) - truth["beta"]
    L_C = np.linalg.solve(XtX, X.T @ proj.Z_C)
    var = sigma2 * np.einsum("ij,jk,ik->i", L_C, proj.covariate_gram, L_C)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(bias) / np.sqrt(var)


def _inference_replicate(config, rep, eval_idx):
    X, Y, A, truth = build_scenario(config, rep)
    out, cache = {}, {}
    for method in config.methods:
        try:
            res = _sp_fit(method, X, Y, A, truth, config, guard=False, cache=cache)
            beta_hat = res.beta_hat[eval_idx]
            cond = conditional_bias_sd(res, X, truth, config.noise_sigma2)[eval_idx]
            covered = []
            for j in eval_idx:
                _, _, lo, hi, _, _ = contrast_inference(res, X, np.eye(config.p)[j])
                covered.append(lo <= truth["beta"][j] <= hi)
            out[method] = {"beta": beta_hat, "covered": np.array(covered, dtype=float),
                           "cond_ratio": cond,
                           "chisq": res.chisq_stat, "pvalue": res.chisq_pvalue,
                           "df": res.chisq_df, "r": res.r_used}
        except NetRegError as exc:
            out[method] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def _mse(fitted, EY):
    return float(np.sum((fitted - EY) ** 2) / np.sum(EY ** 2))


def _comparison_replicate(config, rep):
    X, Y, A, truth = build_scenario(config, rep)
    out, cache = {}, {}
    for method in config.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if method in SP_METHODS:
                    res = _sp_fit(method, X, Y, A, truth, config, guard=True, cache=cache)
                    fitted, extra = res.fitted, {"fallback": float(res.fallback),
                                                 "r": res.r_used}
                elif method == "OLS":
                    fitted, extra = fit_ols(X, Y).fitted_values, {}
                elif method == "SIM":
                    fitted, extra = fit_sim(X, Y, A).fitted_values, {}
                else:
                    fitted, extra = fit_rnc(X, Y, A, seed=config.seed + rep).fitted_values, {}
            out[method] = {"mse": _mse(fitted, truth["EY"]), **extra}
        except NetRegError as exc:
            out[method] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def _run_replicates(func, config, n_jobs, *args):
    if n_jobs == 1:
        return [func(config, rep, *args) for rep in range(config.reps)]
    return Parallel(n_jobs=n_jobs, prefer="processes")(
        delayed(func)(config, rep, *args) for rep in range(config.reps))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.nan, np.nan
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else np.nan
    return float(v.mean()), se


def bias_sd_ratio(estimates, truth):
    """Mean over coordinates of ``|mean(estimate) - truth| / sd(estimate)``
    with an approximate Monte Carlo standard error."""
    est = np.asarray(estimates, dtype=float)
    reps = est.shape[0]
    bias = est.mean(axis=0) - np.asarray(truth, dtype=float)
    sd = est.std(axis=0, ddof=1)
    ratios = np.abs(bias) / sd
    # delta method: se of bias/sd is about sqrt((1 + ratio^2 / 2) / reps)
    se = np.sqrt((1 + ratios ** 2 / 2) / reps)
    return float(ratios.mean()), float(se.mean())


@dataclass
class ExperimentReport:
    """Aggregates of one experiment, one row per method and metric.

    ``samples`` keeps per-replicate values (for example chi-squared
    statistics) keyed by ``"<method>/<name>"``.
    """

    kind: str
    config: dict
    rows: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def add(self, method, metric, value, stderr, reps, failures=0):
        self.rows.append({"method": method, "n": self.config.get("n"),
                          "density": self.config.get("density"), "metric": metric,
                          "value": float(value), "mc_stderr": float(stderr),
                          "reps": int(reps), "failures": int(failures)})

    def get(self, method, metric):
        for row in self.rows:
            if row["method"] == method and row["metric"] == metric:
                return row
        raise KeyError((method, metric))

    def value(self, method, metric):
        return self.get(method, metric)["value"]

    def to_dict(self):
        return {"kind": self.kind, "config": self.config, "rows": self.rows,
                "samples": self.samples, "wall_time": self.wall_time}

    def to_json(self, timestamp=True):
        d = self.to_dict()
        if not timestamp:
            d = {**d, "wall_time": None}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], config=d["config"], rows=list(d["rows"]),
                   samples=dict(d.get("samples", {})), wall_time=d.get("wall_time") or 0.0)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        buf = io.StringIO()
        fields = ["method", "n", "density", "metric", "value", "mc_stderr", "reps", "failures"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: (f"{row[k]:.6g}" if isinstance(row[k], float) else row[k])
                             for k in fields})
        return buf.getvalue()


def _config_dict(config):
    d = asdict(config)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def run_inference_experiment(config, n_jobs=1):
    """Bias-SD ratio and interval coverage of ``beta`` over the coordinates
    outside the overlap, plus the chi-squared rejection rate."""
    bad = [m for m in config.methods if m not in SP_METHODS]
    if bad:
        raise InputError(f"inference experiments take SP methods only, got {bad}")
    pop = population(config)
    eval_idx = np.arange(pop.r, config.p)
    start = time.perf_counter()
    results = _run_replicates(_inference_replicate, config, n_jobs, eval_idx)
    report = ExperimentReport("inference", _config_dict(config))
    beta = np.asarray(config.beta)[eval_idx]
    null = config.effects == "zero_gamma" or not np.any(config.gamma)
    for method in config.methods:
        ok = [res[method] for res in results if "error" not in res[method]]
        failures = config.reps - len(ok)
        if not ok:
            report.add(method, "failures", failures, 0.0, config.reps, failures)
            continue
        est = np.array([o["beta"] for o in ok])
        if len(ok) > 1:
            ratio, ratio_se = bias_sd_ratio(est, beta)
            report.add(method, "bias_sd_ratio", ratio, ratio_se, len(ok), failures)
        cond, cond_se = _mean_se([o["cond_ratio"].mean() for o in ok])
        report.add(method, "bias_sd_ratio_conditional", cond, cond_se, len(ok), failures)
        cov, cov_se = _mean_se([o["covered"].mean() for o in ok])
        report.add(method, "coverage", cov, cov_se, len(ok), failures)
        pvals = np.array([o["pvalue"] for o in ok])
        pvals = pvals[np.isfinite(pvals)]
        if pvals.size:
            rate = float(np.mean(pvals < 0.05))
            rate_se = float(np.sqrt(rate * (1 - rate) / pvals.size))
            report.add(method, "type1_rate" if null else "rejection_rate", rate, rate_se,
                       pvals.size, failures)
        report.samples[f"{method}/chisq"] = [float(o["chisq"]) for o in ok]
        report.samples[f"{method}/chisq_df"] = int(ok[0]["df"])
    report.wall_time = time.perf_counter() - start
    return report


def run_comparison_experiment(config, n_jobs=1):
    """Relative error ``|Yhat - EY|^2 / |EY|^2`` of every method; SP methods
    fall back to OLS when the network effect is not significant."""
    start = time.perf_counter()
    results = _run_replicates(_comparison_replicate, config, n_jobs)
    report = ExperimentReport("comparison", _config_dict(config))
    for method in config.methods:
        ok = [res[method] for res in results if "error" not in res[method]]
        failures = config.reps - len(ok)
        if not ok:
            report.add(method, "failures", failures, 0.0, config.reps, failures)
            continue
        mean, se = _mean_se([o["mse"] for o in ok])
        report.add(method, "relative_mse", mean, se, len(ok), failures)
        if method in SP_METHODS:
            fb, fb_se = _mean_se([o["fallback"] for o in ok])
            report.add(method, "fallback_rate", fb, fb_se, len(ok), failures)
        report.samples[f"{method}/mse"] = [float(o["mse"]) for o in ok]
    report.wall_time = time.perf_counter() - start
    return report


def concentration_bound(n, K, d):
    return 2 * np.sqrt(K * np.log(n)) / d


def _concentration_replicate(config, rep, v):
    pop = population(config)
    A = sample_inhomogeneous_er(pop.P, replicate_rng(config.seed, rep, STREAM_NETWORK))
    W_hat = network_estimate(A, ADJACENCY).eigenvectors(config.K).matrix
    W = pop.W
    diff = W_hat @ (W_hat.T @ v) - W @ (W.T @ v)
    return float(np.linalg.norm(diff))


def run_concentration_check(n, K=4, density="n_two_thirds", reps=100, seed=0, n_jobs=1,
                            v=None, network="sbm"):
    """Empirical distribution of ``|(W_hat W_hat^T - W W^T) v|`` against the
    bound ``2 sqrt(K log n) / d``.

    ``v`` defaults to the second standardized column of the eigenspace
    design. The bound is reported for both density conventions: the average
    expected degree and ``n * max P_ij``.
    """
    config = ScenarioConfig(n=n, p=min(K, 4), K=K, network=network, density=density,
                            beta=(0.0,) * min(K, 4), theta=(0.0,) * min(K, 4),
                            reps=reps, seed=seed, methods=())
    pop = population(config)
    if v is None:
        v = pop.X[:, 1] / np.linalg.norm(pop.X[:, 1])
    v = np.asarray(v, dtype=float)
    start = time.perf_counter()
    values = np.array(_run_replicates(_concentration_replicate, config, n_jobs, v))
    report = ExperimentReport("concentration", _config_dict(config))
    mean, se = _mean_se(values)
    report.add("SP", "perturbation_mean", mean, se, reps)
    for q in (0.5, 0.9, 0.95, 0.99):
        report.add("SP", f"perturbation_q{int(q * 100)}", np.quantile(values, q), np.nan, reps)
    report.add("SP", "perturbation_max", values.max(), np.nan, reps)
    for label, d in (("avg_degree", config.avg_degree), ("max_degree", pop.d_max)):
        bound = concentration_bound(n, K, d)
        rate = float(np.mean(values > bound))
        report.add("SP", f"bound_{label}", bound, 0.0, reps)
        report.add("SP", f"violation_rate_{label}", rate, np.sqrt(rate * (1 - rate) / reps), reps)
        report.add("SP", f"scaled_{label}", mean * d, se * d, reps)
    report.samples["SP/perturbation"] = values.tolist()
    report.wall_time = time.perf_counter() - start
    return report
