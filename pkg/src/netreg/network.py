"""Random network models, block-model estimation of the edge-probability
matrix, and the graph Laplacian.

Matrices are plain ``numpy`` arrays. Community labels may be any integer
(or hashable) values; communities are the sorted distinct labels.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator, check_square_symmetric
from .exceptions import (
    ClampingWarning,
    EmptyCommunity,
    InputError,
    IsolatedNodeWarning,
    ZeroDegreeCommunity,
)
from .spectral import OrthonormalBasis, _fix_signs, leading_eigvectors

NU_FLOOR = 1e-8

ADJACENCY = "adjacency"
LAPLACIAN = "laplacian"
SBM = "sbm"
DCBM = "dcbm"
SBM_LAPLACIAN = "sbm-laplacian"
DCBM_LAPLACIAN = "dcbm-laplacian"
LAPLACIAN_SOURCES = (LAPLACIAN, SBM_LAPLACIAN, DCBM_LAPLACIAN)


@dataclass(frozen=True, eq=False)
class NetworkEstimate:
    """A symmetric matrix standing in for the relational matrix, together
    with which end of its spectrum spans the network subspace.

    ``factor`` optionally holds ``(F, B)`` with ``matrix == F @ B @ F.T``;
    it lets block-model estimates be eigendecomposed through a small
    ``k x k`` problem.
    """

    matrix: np.ndarray
    eigen_direction: str = "largest"
    source: str = ADJACENCY
    B: np.ndarray | None = None
    nu: np.ndarray | None = None
    factor: tuple | None = field(default=None, repr=False)
    adjacency: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.eigen_direction == "smallest") != (self.source in LAPLACIAN_SOURCES):
            raise InputError("the smallest eigen-direction is reserved for Laplacians")

    @property
    def n(self):
        return self.matrix.shape[0]

    def eigenvectors(self, K):
        """The ``K`` eigenvectors spanning the estimated network subspace."""
        if self.factor is not None:
            basis = _factored_eigvectors(*self.factor, K)
            if basis is not None:
                return basis
        return leading_eigvectors(self.matrix, K, self.eigen_direction)


def _factored_eigvectors(F, B, K):
    # top-K eigenvectors of F B F^T; None when K exceeds the positive part
    Q, R = np.linalg.qr(F, mode="reduced")
    small = R @ B @ R.T
    vals, vecs = np.linalg.eigh(0.5 * (small + small.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if K > vals.size or vals[K - 1] <= 1e-10 * max(abs(vals[0]), 1e-300):
        return None
    if K < vals.size and abs(vals[K - 1] - vals[K]) < 1e-8 * abs(vals[0]):
        warnings.warn(f"eigenvalues {K} and {K + 1} coincide", stacklevel=3)
    return OrthonormalBasis(_fix_signs(Q @ vecs[:, :K]), values=vals[:K].copy())


def _encode(g, n_communities=None):
    g = np.asarray(g)
    if g.ndim != 1:
        raise InputError("community labels must be one-dimensional")
    labels, codes = np.unique(g, return_inverse=True)
    if n_communities is not None and labels.size < n_communities:
        raise EmptyCommunity(
            f"{n_communities} communities declared but only {labels.size} are occupied"
        )
    return labels, codes


def membership_matrix(g):
    """One-hot ``n x k`` indicator of community membership."""
    _, codes = _encode(g)
    F = np.zeros((codes.size, codes.max() + 1))
    F[np.arange(codes.size), codes] = 1.0
    return F


def check_probability_matrix(P):
    P = check_square_symmetric(P, tol=1e-12, name="probability matrix")
    if P.min(initial=0.0) < 0 or P.max(initial=0.0) > 1:
        raise InputError("probability matrix entries must lie in [0, 1]")
    return P


def sample_inhomogeneous_er(P, random_state=None):
    """Draw a symmetric 0/1 adjacency matrix with independent edges
    ``A_ij ~ Bernoulli(P_ij)`` for ``i < j`` and an empty diagonal."""
    P = check_probability_matrix(P)
    rng = as_generator(random_state)
    n = P.shape[0]
    U = rng.random((n, n))
    A = np.triu(U < P, k=1).astype(np.float64)
    return A + A.T


def sbm_probability(g, B):
    """Edge probabilities ``P_ij = B[g_i, g_j]`` of a stochastic block model."""
    B = np.asarray(B, dtype=np.float64)
    _, codes = _encode(g)
    if B.shape[0] != B.shape[1] or not np.allclose(B, B.T, atol=1e-12):
        raise InputError("block matrix must be square and symmetric")
    if codes.max() >= B.shape[0]:
        raise InputError("more communities than rows of B")
    if B.min() < 0 or B.max() > 1:
        raise InputError("block probabilities must lie in [0, 1]")
    return B[np.ix_(codes, codes)]


def dcbm_probability(g, B, nu):
    """Degree-corrected block model ``P_ij = nu_i nu_j B[g_i, g_j]``.

    Entries above one are clamped, with a :class:`ClampingWarning`.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if np.any(nu <= 0):
        raise InputError("degree parameters must be positive")
    B = np.asarray(B, dtype=np.float64)
    _, codes = _encode(g)
    P = np.outer(nu, nu) * B[np.ix_(codes, codes)]
    if P.max() > 1:
        warnings.warn("degree-corrected probabilities exceed 1 and were clamped", ClampingWarning,
                      stacklevel=2)
        P = np.minimum(P, 1.0)
    return P


def adjacency_estimate(A):
    A = check_square_symmetric(A, name="adjacency matrix")
    return NetworkEstimate(matrix=A, eigen_direction="largest", source=ADJACENCY, adjacency=A)


def laplacian(A):
    """Unnormalized Laplacian ``L = D - A``; its network subspace is at the
    bottom of the spectrum."""
    A = check_square_symmetric(A, name="adjacency matrix")
    L = np.diag(A.sum(axis=1)) - A
    return NetworkEstimate(matrix=L, eigen_direction="smallest", source=LAPLACIAN, adjacency=A)


def average_degree(A):
    A = np.asarray(A, dtype=np.float64)
    return float(A.sum() / A.shape[0])


def _block_counts(A, codes, k):
    F = np.zeros((codes.size, k))
    F[np.arange(codes.size), codes] = 1.0
    return F, F.T @ A @ F, F.sum(axis=0)


def estimate_sbm(A, g, n_communities=None):
    """Block-average estimate of an SBM edge-probability matrix.

    ``B_kl = sum_{g_i=k, g_j=l} A_ij / (n_k n_l)``; the within-block divisor
    includes the (empty) diagonal, matching the usual block-mean estimator
    literally.
    """
    A = check_square_symmetric(A, name="adjacency matrix")
    labels, codes = _encode(g, n_communities)
    if codes.size != A.shape[0]:
        raise InputError("label vector length does not match the network")
    F, S, counts = _block_counts(A, codes, labels.size)
    B = S / np.outer(counts, counts)
    B = np.clip(0.5 * (B + B.T), 0.0, 1.0)
    P = B[np.ix_(codes, codes)]
    return NetworkEstimate(matrix=P, eigen_direction="largest", source=SBM, B=B,
                           factor=(F, B), adjacency=A,
                           diagnostics={"labels": labels, "communities": np.asarray(g)})


def estimate_dcbm(A, g, n_communities=None):
    """Degree-corrected block model estimate.

    ``nu_i = n_k d_i / sum_{g_j=k} d_j`` (so the ``nu`` of each community sum
    to its size) and ``B_kl = sum A_ij / (nu_i nu_j) / (n_k n_l)``.
    Isolated nodes get ``nu`` floored at ``1e-8``.
    """
    A = check_square_symmetric(A, name="adjacency matrix")
    labels, codes = _encode(g, n_communities)
    if codes.size != A.shape[0]:
        raise InputError("label vector length does not match the network")
    k = labels.size
    deg = A.sum(axis=1)
    counts = np.bincount(codes, minlength=k).astype(np.float64)
    comm_deg = np.bincount(codes, weights=deg, minlength=k)
    if np.any(comm_deg <= 0):
        bad = labels[comm_deg <= 0].tolist()
        raise ZeroDegreeCommunity(f"communities with zero total degree: {bad}")
    nu = counts[codes] * deg / comm_deg[codes]
    n_isolated = int(np.sum(nu < NU_FLOOR))
    if n_isolated:
        warnings.warn(f"{n_isolated} isolated node(s); degree parameter floored at {NU_FLOOR}",
                      IsolatedNodeWarning, stacklevel=2)
        nu = np.maximum(nu, NU_FLOOR)
    scaled = A / np.outer(nu, nu)
    _, S, _ = _block_counts(scaled, codes, k)
    B = S / np.outer(counts, counts)
    B = 0.5 * (B + B.T)
    P = np.outer(nu, nu) * B[np.ix_(codes, codes)]
    factor = None
    clamped = bool(P.max() > 1)
    if clamped:
        P = np.minimum(P, 1.0)
    else:
        F = np.zeros((codes.size, k))
        F[np.arange(codes.size), codes] = nu
        factor = (F, B)
    return NetworkEstimate(matrix=P, eigen_direction="largest", source=DCBM, B=B, nu=nu,
                           factor=factor, adjacency=A,
                           diagnostics={"labels": labels, "communities": np.asarray(g),
                                        "isolated_nodes": n_isolated,
                                        "clamped": clamped})


def block_laplacian(estimate):
    """Laplacian ``D - P`` of a block-model estimate ``P``, with ``D`` its
    expected degrees."""
    P = estimate.matrix
    L = np.diag(P.sum(axis=1)) - P
    source = SBM_LAPLACIAN if estimate.source == SBM else DCBM_LAPLACIAN
    return NetworkEstimate(matrix=L, eigen_direction="smallest", source=source, B=estimate.B,
                           nu=estimate.nu, adjacency=estimate.adjacency,
                           diagnostics=dict(estimate.diagnostics))


def network_estimate(A, kind=ADJACENCY, communities=None):
    """Dispatch on ``kind`` (adjacency, laplacian, sbm, dcbm, sbm-laplacian,
    dcbm-laplacian)."""
    if isinstance(A, NetworkEstimate):
        return A
    if kind == ADJACENCY:
        return adjacency_estimate(A)
    if kind == LAPLACIAN:
        return laplacian(A)
    if kind in (SBM, DCBM):
        if communities is None:
            raise InputError(f"--phat {kind} requires community labels")
        return estimate_sbm(A, communities) if kind == SBM else estimate_dcbm(A, communities)
    if kind in (SBM_LAPLACIAN, DCBM_LAPLACIAN):
        base = SBM if kind == SBM_LAPLACIAN else DCBM
        return block_laplacian(network_estimate(A, base, communities))
    raise InputError(f"unknown network estimate {kind!r}")
