"""Subspace primitives: orthonormal bases, eigenvectors, principal-angle
alignment and the three (oblique) projections used by the estimator.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .exceptions import BadPartition, DegenerateAngle, EigenGapWarning, RankDeficient

RANK_TOL = 1e-10
ANGLE_TOL = 1e-8


def _fix_signs(Q, tol=1e-12):
    """Flip columns so the first non-negligible entry of each is >= 0."""
    Q = np.array(Q, dtype=np.float64, copy=True)
    if Q.size == 0:
        return Q
    scale = np.abs(Q).max(axis=0)
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > tol * max(scale[j], tol))
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Column-orthonormal ``n x k`` matrix, optionally with eigenvalues."""

    matrix: np.ndarray
    values: np.ndarray | None = None

    @property
    def k(self):
        return self.matrix.shape[1]

    @property
    def n(self):
        return self.matrix.shape[0]

    def projector(self):
        return self.matrix @ self.matrix.T

    def columns(self, start, stop=None):
        return OrthonormalBasis(self.matrix[:, start:stop])


def orthonormal_basis(X):
    """Orthonormal basis of ``col(X)`` via a thin QR factorization.

    Raises
    ------
    RankDeficient
        If the smallest diagonal entry of R is below ``1e-10`` times the
        largest one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n < p:
        raise RankDeficient(f"cannot span {p} columns in dimension {n}")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    if p and (diag.max() == 0 or diag.min() < RANK_TOL * diag.max()):
        raise RankDeficient("design matrix is numerically rank deficient")
    return OrthonormalBasis(_fix_signs(Q))


def leading_eigvectors(S, K, direction="largest"):
    """``K`` eigenvectors of the symmetric matrix ``S`` at one end of the spectrum.

    Eigenvalues are ordered algebraically: descending for ``"largest"``,
    ascending for ``"smallest"``. A non-fatal :class:`EigenGapWarning` is
    issued when eigenvalues ``K`` and ``K+1`` coincide to within
    ``1e-8 * ||S||``.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    if direction not in ("largest", "smallest"):
        raise ValueError(f"unknown direction {direction!r}")
    extra = 1 if K < n else 0
    if direction == "largest":
        lo, hi = n - K - extra, n - 1
    else:
        lo, hi = 0, K - 1 + extra
    vals, vecs = sla.eigh(S, subset_by_index=[lo, hi])
    if direction == "largest":
        vals, vecs = vals[::-1], vecs[:, ::-1]
    if extra:
        # infinity norm bounds the spectral norm of a symmetric matrix
        norm = np.abs(S).sum(axis=1).max()
        if abs(vals[K - 1] - vals[K]) < 1e-8 * max(norm, np.finfo(float).tiny):
            warnings.warn(
                f"eigenvalues {K} and {K + 1} coincide; the {K}-dimensional "
                "eigenspace is not well defined",
                EigenGapWarning,
                stacklevel=2,
            )
    return OrthonormalBasis(_fix_signs(vecs[:, :K]), values=vals[:K].copy())


@dataclass(frozen=True, eq=False)
class AlignmentSVD:
    """SVD of ``Z^T W_hat`` and the rotated bases ``Z_hat``, ``W_breve``."""

    U_hat: np.ndarray
    sigma_hat: np.ndarray
    V_hat: np.ndarray
    Z_hat: np.ndarray
    W_breve: np.ndarray

    @property
    def p(self):
        return self.Z_hat.shape[1]

    @property
    def K(self):
        return self.W_breve.shape[1]

    @property
    def n(self):
        return self.Z_hat.shape[0]


def alignment_svd(Z, W_hat):
    """Principal-angle alignment between ``col(Z)`` and ``col(W_hat)``.

    The returned singular values are the cosines of the principal angles,
    clamped to ``[0, 1]``; ``Z_hat^T W_breve`` is diagonal.
    """
    Zm = Z.matrix if isinstance(Z, OrthonormalBasis) else np.asarray(Z, dtype=np.float64)
    Wm = W_hat.matrix if isinstance(W_hat, OrthonormalBasis) else np.asarray(W_hat, dtype=np.float64)
    if Zm.shape[0] != Wm.shape[0]:
        raise ValueError("bases must share the row dimension")
    U, s, Vt = np.linalg.svd(Zm.T @ Wm, full_matrices=True)
    s = np.clip(s, 0.0, 1.0)
    V = Vt.T
    return AlignmentSVD(U_hat=U, sigma_hat=s, V_hat=V, Z_hat=Zm @ U, W_breve=Wm @ V)


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """The projections onto the intersection (R), covariate-only (C) and
    network-only (N) components.

    Stored in factored form; the dense ``n x n`` operators are built on
    first access. ``G_inv`` is ``(M^T M)^{-1}`` with
    ``M = (Z_C, W_N)``.
    """

    Z_R: np.ndarray
    Z_C: np.ndarray
    W_N: np.ndarray
    G_inv: np.ndarray
    r: int
    K: int
    p: int
    sigma_hat: np.ndarray

    @property
    def n(self):
        return self.Z_R.shape[0]

    @property
    def M(self):
        return np.hstack([self.Z_C, self.W_N])

    def coordinates(self, y):
        """``(M^T M)^{-1} M^T y`` split into its covariate and network blocks."""
        c = self.G_inv @ (self.M.T @ y)
        q = self.p - self.r
        return c[:q], c[q:]

    def components(self, y):
        """Return ``(P_R y, P_C y, P_N y)`` without forming dense operators."""
        y = np.asarray(y, dtype=np.float64)
        cz, cw = self.coordinates(y)
        return self.Z_R @ (self.Z_R.T @ y), self.Z_C @ cz, self.W_N @ cw

    def apply_H(self, y):
        yr, yc, yn = self.components(y)
        return yr + yc + yn

    @property
    def covariate_gram(self):
        """``(G^{-1})`` covariate block; ``P_C P_C^T = Z_C @ this @ Z_C^T``."""
        q = self.p - self.r
        return self.G_inv[:q, :q]

    @property
    def network_gram(self):
        """``(G^{-1})`` network block; ``W_N^T P_N P_N^T W_N`` equals this."""
        q = self.p - self.r
        return self.G_inv[q:, q:]

    @cached_property
    def P_R(self):
        return self.Z_R @ self.Z_R.T

    @cached_property
    def P_C(self):
        q = self.p - self.r
        return self.Z_C @ (self.G_inv[:q] @ self.M.T)

    @cached_property
    def P_N(self):
        q = self.p - self.r
        return self.W_N @ (self.G_inv[q:] @ self.M.T)

    @cached_property
    def H(self):
        return self.P_R + self.P_C + self.P_N

    def check_invariants(self, atol=1e-8, trace_tol=1e-6):
        """Assert the structural identities of the projection set.

        Returns a dict of the measured defects; raises ``AssertionError``
        when any exceeds its tolerance.
        """
        H = self.H
        defects = {
            "symmetry": float(np.abs(H - H.T).max(initial=0.0)),
            "idempotence": float(np.abs(H @ H - H).max(initial=0.0)),
            "trace": float(abs(np.trace(H) - (self.p + self.K - self.r))),
            "R_orth_CN": float(np.abs(self.P_R @ (self.P_C + self.P_N)).max(initial=0.0)),
            "C_on_Z": float(np.abs(self.P_C @ self.Z_C - self.Z_C).max(initial=0.0)),
            "C_on_W": float(np.abs(self.P_C @ self.W_N).max(initial=0.0)),
            "N_on_W": float(np.abs(self.P_N @ self.W_N - self.W_N).max(initial=0.0)),
            "N_on_Z": float(np.abs(self.P_N @ self.Z_C).max(initial=0.0)),
        }
        for key, val in defects.items():
            tol = trace_tol if key == "trace" else atol
            assert val <= tol, f"projection invariant {key!r} violated: {val:.3e} > {tol:.1e}"
        return defects


def build_projections(svd, r):
    """Build the R/C/N projections from an alignment SVD, keeping ``r``
    leading directions as the intersection.

    Raises
    ------
    DegenerateAngle
        If ``sigma_hat[r]`` exceeds ``1 - 1e-8``: the remaining subspaces
        share a direction and ``M^T M`` is singular.
    """
    p, K = svd.p, svd.K
    r = int(r)
    if not 0 <= r <= min(p, K):
        raise ValueError(f"r must lie in [0, {min(p, K)}], got {r}")
    if r < svd.sigma_hat.size and svd.sigma_hat[r] > 1.0 - ANGLE_TOL:
        raise DegenerateAngle(
            f"singular value {r + 1} is {svd.sigma_hat[r]:.12f}; increase r "
            "or use rank selection"
        )
    Z_R = svd.Z_hat[:, :r]
    Z_C = svd.Z_hat[:, r:]
    W_N = svd.W_breve[:, r:]
    q1, q2 = p - r, K - r
    cross = Z_C.T @ W_N
    G = np.block([[np.eye(q1), cross], [cross.T, np.eye(q2)]])
    G = 0.5 * (G + G.T)
    G_inv = np.linalg.inv(G) if G.size else G
    return ProjectionSet(
        Z_R=Z_R, Z_C=Z_C, W_N=W_N, G_inv=0.5 * (G_inv + G_inv.T),
        r=r, K=K, p=p, sigma_hat=svd.sigma_hat.copy(),
    )


def closed_form_projections(svd, r, s):
    """Explicit rank-one expansions of the C and N projections.

    Intended as an independent check of :func:`build_projections`: each
    interior pair ``(z_i, w_i)`` with cosine ``sigma_i`` contributes
    ``(z z^T - sigma z w^T) / (1 - sigma^2)`` to ``P_C`` (symmetrically for
    ``P_N``); trailing unpaired directions contribute plain orthogonal
    projectors.

    Raises
    ------
    BadPartition
        If ``sigma_hat[r:r+s]`` are not strictly below one or any later
        singular value is non-zero (tolerance ``1e-6``).
    """
    p, K = svd.p, svd.K
    sig = svd.sigma_hat
    if r < 0 or s < 0 or r + s > min(p, K):
        raise BadPartition(f"invalid split r={r}, s={s} for min(p, K)={min(p, K)}")
    interior = sig[r:r + s]
    if np.any(interior > 1.0 - 1e-6):
        raise BadPartition("interior singular values must be strictly below 1")
    if np.any(sig[r + s:] > 1e-6):
        raise BadPartition("singular values beyond r+s must vanish")
    Zh, Wb = svd.Z_hat, svd.W_breve
    n = svd.n
    P_C = np.zeros((n, n))
    P_N = np.zeros((n, n))
    for i in range(r, r + s):
        z, w, c = Zh[:, i], Wb[:, i], sig[i]
        denom = 1.0 - c * c
        P_C += (np.outer(z, z) - c * np.outer(z, w)) / denom
        P_N += (np.outer(w, w) - c * np.outer(w, z)) / denom
    tail_z = Zh[:, r + s:]
    tail_w = Wb[:, r + s:]
    P_C += tail_z @ tail_z.T
    P_N += tail_w @ tail_w.T
    return P_C, P_N


def subspace_perturbation(Z, W, W_hat):
    """Spectral norm of ``(W_hat W_hat^T - W W^T) Z``."""
    Zm = Z.matrix if isinstance(Z, OrthonormalBasis) else np.asarray(Z, dtype=np.float64)
    Wm = W.matrix if isinstance(W, OrthonormalBasis) else np.asarray(W, dtype=np.float64)
    Wh = W_hat.matrix if isinstance(W_hat, OrthonormalBasis) else np.asarray(W_hat, dtype=np.float64)
    if Zm.ndim == 1:
        Zm = Zm[:, None]
    D = Wh @ (Wh.T @ Zm) - Wm @ (Wm.T @ Zm)
    return float(np.linalg.norm(D, 2))
