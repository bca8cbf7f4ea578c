"""Reading network-linked datasets and writing fit reports."""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._validation import standardize_columns
from .exceptions import (
    DegenerateDirection,
    DimensionMismatch,
    InputError,
    MissingColumn,
    NonNumericResponse,
)
from .estimator import contrast_inference, theta_inference


@dataclass(frozen=True, eq=False)
class EdgeListInfo:
    n_nodes: int
    n_edges: int
    duplicates: int
    self_loops: int
    indexing: str


def read_edge_list(path, n=None, indexing="one", weighted=False):
    """Parse a whitespace-separated edge list ``i j [w]``.

    Lines starting with ``#`` are comments. Duplicate edges (in either
    orientation) collapse to one edge carrying the largest weight; self-loops
    are dropped and counted.

    Returns
    -------
    A : (n, n) ndarray
    info : EdgeListInfo
    """
    if indexing not in ("zero", "one"):
        raise InputError(f"indexing must be 'zero' or 'one', got {indexing!r}")
    offset = 1 if indexing == "one" else 0
    edges = {}
    seen = 0
    loops = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2 or len(parts) > 3:
                raise InputError(f"{path}:{lineno}: expected 'i j [w]'")
            try:
                i, j = int(parts[0]) - offset, int(parts[1]) - offset
                w = float(parts[2]) if (weighted and len(parts) == 3) else 1.0
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            if i < 0 or j < 0:
                raise InputError(f"{path}:{lineno}: node index below the {indexing}-based origin")
            if i == j:
                loops += 1
                continue
            seen += 1
            key = (min(i, j), max(i, j))
            edges[key] = max(edges.get(key, -math.inf), w)
    top = max((max(k) for k in edges), default=-1) + 1
    if n is None:
        n = top
    elif top > n:
        raise DimensionMismatch(f"edge list references node {top} but n={n}")
    A = np.zeros((n, n))
    for (i, j), w in edges.items():
        A[i, j] = A[j, i] = w
    return A, EdgeListInfo(n_nodes=int(n), n_edges=len(edges), duplicates=seen - len(edges),
                           self_loops=loops, indexing=indexing)


def read_communities(path, n=None):
    """One integer label per line, 1-based."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        g = np.array([int(r) for r in rows])
    except ValueError as exc:
        raise InputError(f"community labels must be integers: {exc}") from exc
    if g.size and g.min() < 1:
        raise InputError("community labels are 1-based")
    if n is not None and g.size != n:
        raise DimensionMismatch(f"{g.size} community labels for {n} nodes")
    return g


def design_from_frame(frame, columns=None, reference=None, level_map=None):
    """Numeric design matrix from a data frame.

    Non-numeric columns become 0/1 indicators of every level except the
    reference (``reference[col]``, default the first level in sorted order).
    ``level_map[col]`` relabels levels first, which merges categories.
    """
    reference = dict(reference or {})
    level_map = dict(level_map or {})
    columns = list(frame.columns) if columns is None else list(columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MissingColumn(f"columns not found: {missing}")
    blocks, names = [], []
    for col in columns:
        s = frame[col]
        if col in level_map:
            s = s.map(lambda v, m=level_map[col]: m.get(v, v))
        if pd.api.types.is_numeric_dtype(s) and col not in reference:
            if s.isna().any():
                raise InputError(f"column {col!r} has missing values")
            blocks.append(s.to_numpy(dtype=np.float64)[:, None])
            names.append(col)
            continue
        levels = sorted(s.astype(str).unique())
        ref = str(reference.get(col, levels[0]))
        if ref not in levels:
            raise InputError(f"reference level {ref!r} not among levels of {col!r}: {levels}")
        for lev in levels:
            if lev == ref:
                continue
            blocks.append((s.astype(str) == lev).to_numpy(dtype=np.float64)[:, None])
            names.append(f"{col}[{lev}]")
    if not blocks:
        raise InputError("no covariate columns")
    return np.hstack(blocks), names


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray
    names: list
    scale: np.ndarray
    communities: np.ndarray | None = None
    edge_info: EdgeListInfo | None = None


def read_dataset(network, covariates, response, communities=None, *, columns=None,
                 reference=None, level_map=None, indexing="one", weighted=False,
                 standardize=True):
    """Load an edge list, a covariate CSV (one row per node, in node order)
    and optional community labels.

    ``X`` has its columns rescaled to norm ``sqrt(n)``; ``scale`` holds the
    factors so coefficients can be mapped back to the raw units.
    """
    frame = pd.read_csv(covariates)
    if response not in frame.columns:
        raise MissingColumn(f"response column {response!r} not in {covariates}")
    try:
        Y = pd.to_numeric(frame[response], errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise NonNumericResponse(f"response {response!r} is not numeric") from exc
    if np.isnan(Y).any():
        raise NonNumericResponse(f"response {response!r} has missing values")
    if columns is None:
        columns = [c for c in frame.columns if c != response]
    X, names = design_from_frame(frame, columns, reference, level_map)
    n = X.shape[0]
    A, info = read_edge_list(network, indexing=indexing, weighted=weighted)
    if A.shape[0] > n:
        raise DimensionMismatch(f"network has {A.shape[0]} nodes, covariates have {n} rows")
    if A.shape[0] < n:
        # trailing nodes without edges
        A = np.pad(A, ((0, n - A.shape[0]), (0, n - A.shape[0])))
        info = EdgeListInfo(n, info.n_edges, info.duplicates, info.self_loops, info.indexing)
    g = None if communities is None else read_communities(communities, n)
    if standardize:
        norms = np.linalg.norm(X, axis=0)
        scale = np.sqrt(n) / norms
        X = standardize_columns(X)
    else:
        scale = np.ones(X.shape[1])
    return Dataset(X=X, Y=Y, A=A, names=names, scale=scale, communities=g, edge_info=info)


def _num(x):
    x = float(x)
    return None if not math.isfinite(x) else x


@dataclass
class FitReport:
    """Machine-readable summary of a fit. Non-finite numbers are ``None``."""

    coefficients: list
    network_effect: dict
    sigma2: float
    r: int
    K: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"coefficients": self.coefficients, "network_effect": self.network_effect,
                "sigma2": self.sigma2, "r": self.r, "K": self.K,
                "diagnostics": self.diagnostics}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(coefficients=[dict(c) for c in d["coefficients"]],
                   network_effect=dict(d["network_effect"]), sigma2=d["sigma2"],
                   r=int(d["r"]), K=int(d["K"]), diagnostics=dict(d.get("diagnostics", {})))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, FitReport) and self.to_dict() == other.to_dict()


def build_fit_report(result, names=None, scale=None, level=0.05, source=None,
                     avg_degree=None):
    """Assemble a :class:`FitReport` from a :class:`~netreg.estimator.FitResult`.

    ``scale`` maps standardized coefficients back to raw covariate units.
    """
    p = result.p
    names = [f"x{j + 1}" for j in range(p)] if names is None else list(names)
    scale = np.ones(p) if scale is None else np.asarray(scale, dtype=float)
    rows = []
    for j in range(p):
        try:
            est, se, lo, hi, z, pv = contrast_inference(result, None, np.eye(p)[j], level)
        except DegenerateDirection:
            est, se, lo, hi, z, pv = float(result.beta_hat[j]), *(math.nan,) * 5
        try:
            theta_se = theta_inference(result, None, j, level)[1]
        except DegenerateDirection:
            theta_se = math.nan
        s = scale[j]
        rows.append({"name": names[j], "theta": _num(result.theta_hat[j] * s),
                     "beta": _num(est * s), "se": _num(se * s), "z": _num(z), "p": _num(pv),
                     "ci_lo": _num(lo * s), "ci_hi": _num(hi * s),
                     "theta_se": _num(theta_se * s)})
    report = result.rank_report
    diagnostics = {
        "sigma_hat": [float(v) for v in result.sigma_hat_values],
        "fallback": bool(result.fallback),
        "rank_method": "fixed" if report is None else report.method,
        "dof": int(result.dof),
        "n": int(result.n),
        "level": float(level),
    }
    if report is not None:
        diagnostics["rank_selection"] = report.to_dict()
    if avg_degree is not None:
        diagnostics["avg_degree"] = float(avg_degree)
    if source is not None:
        diagnostics["phat"] = source
    if result.chisq_error is not None:
        diagnostics["chisq_error"] = result.chisq_error
    return FitReport(
        coefficients=rows,
        network_effect={"chisq": _num(result.chisq_stat), "df": int(result.chisq_df),
                        "p": _num(result.chisq_pvalue)},
        sigma2=_num(result.sigma2_hat), r=int(result.r_used), K=int(result.K),
        diagnostics=diagnostics,
    )
