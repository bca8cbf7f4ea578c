"""Selection of the intersection dimension r."""

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import STREAM_BOOTSTRAP, replicate_rng
from .exceptions import UnreliableThresholdWarning
from .network import (
    ADJACENCY,
    average_degree,
    network_estimate,
    sample_inhomogeneous_er,
)
from .spectral import OrthonormalBasis


@dataclass(frozen=True)
class RankSelectionReport:
    r_hat: int
    sigma_hat: np.ndarray
    threshold: float
    method: str
    delta: float | None = None
    B: int | None = None
    reliable: bool = True

    def to_dict(self):
        return {
            "r_hat": int(self.r_hat),
            "sigma_hat": [float(s) for s in self.sigma_hat],
            "threshold": float(self.threshold),
            "method": self.method,
            "delta": None if self.delta is None else float(self.delta),
            "B": self.B,
            "reliable": bool(self.reliable),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(r_hat=int(d["r_hat"]), sigma_hat=np.asarray(d["sigma_hat"], dtype=float),
                   threshold=float(d["threshold"]), method=d["method"], delta=d.get("delta"),
                   B=d.get("B"), reliable=bool(d.get("reliable", True)))


def select_r_threshold(sigma_hat, d_hat, p, K, n):
    """Count singular values at or above ``1 - 4 sqrt(pK log n) / d_hat``."""
    if d_hat <= 0:
        raise ValueError("average degree must be positive")
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    raw = 1.0 - 4.0 * np.sqrt(p * K * np.log(n)) / d_hat
    threshold = max(raw, 0.0)
    reliable = raw > 0
    if not reliable:
        warnings.warn("rank-selection threshold is non-positive; network too sparse for the "
                      "rule, every direction is retained", UnreliableThresholdWarning,
                      stacklevel=2)
    r_hat = int(np.sum(sigma_hat >= threshold))
    r_hat = min(r_hat, min(p, K))
    return RankSelectionReport(r_hat=r_hat, sigma_hat=sigma_hat, threshold=threshold,
                               method="threshold", reliable=reliable)


def svt_estimate(A, K, target_avg_degree, direction="largest"):
    """Rank-``K`` eigen-truncation of ``A``, clamped to ``[0, 1]`` and
    rescaled so its average degree equals ``target_avg_degree``.

    The rescale/clamp is done twice so the degree matches within 1% even
    when the first clamp bites.
    """
    from .spectral import leading_eigvectors

    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    basis = leading_eigvectors(A, K, direction)
    V = basis.matrix
    P = (V * basis.values) @ V.T
    P = np.clip(P, 0.0, 1.0)
    for _ in range(2):
        total = P.sum() / n
        if total > 0:
            P = P * (target_avg_degree / total)
        P = np.clip(P, 0.0, 1.0)
    return 0.5 * (P + P.T)


def _singular_values(Z, W):
    return np.clip(np.linalg.svd(Z.T @ W, compute_uv=False), 0.0, 1.0)


def select_r_bootstrap(A, Z, K, B=50, seed=0, *, sigma_hat=None, kind=ADJACENCY,
                       communities=None):
    """Bootstrap choice of r from the spread of principal-angle cosines.

    Networks are resampled from a degree-matched rank-``K`` truncation of
    ``A``; each resample goes through the same network estimate (``kind``)
    as the fit. ``delta`` is the largest deviation of any bootstrap cosine
    from the observed one, and ``r_hat`` counts observed cosines strictly
    above ``1 - delta``.
    """
    if B < 1:
        raise ValueError("need at least one bootstrap replicate")
    A = np.asarray(A, dtype=np.float64)
    Zm = Z.matrix if isinstance(Z, OrthonormalBasis) else np.asarray(Z, dtype=np.float64)
    p = Zm.shape[1]
    if sigma_hat is None:
        W_hat = network_estimate(A, kind, communities).eigenvectors(K).matrix
        sigma_hat = _singular_values(Zm, W_hat)
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    P_star = svt_estimate(A, K, average_degree(A))
    delta = 0.0
    for b in range(B):
        rng = replicate_rng(seed, b, STREAM_BOOTSTRAP)
        A_b = sample_inhomogeneous_er(P_star, rng)
        W_b = network_estimate(A_b, kind, communities).eigenvectors(K).matrix
        sig_b = _singular_values(Zm, W_b)
        delta = max(delta, float(np.max(np.abs(sig_b - sigma_hat))))
    threshold = 1.0 - delta
    r_hat = min(int(np.sum(sigma_hat > threshold)), min(p, K))
    return RankSelectionReport(r_hat=r_hat, sigma_hat=sigma_hat, threshold=threshold,
                               method="bootstrap", delta=delta, B=int(B))
