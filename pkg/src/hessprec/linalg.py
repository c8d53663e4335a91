"""Dense linear-algebra kernels for the low-rank curvature machinery.

Everything in here operates on matrices that are either small (m x m with
m at most a few dozen) or tall and skinny (N x m), so cubic work on the
small dimension is always acceptable.  The one thing none of these
routines may do is materialize an N x N matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolveFailure(RuntimeError):
    """A linear solve failed for numerical reasons (singular operator)."""


@dataclass(frozen=True)
class LowRankFactorPair:
    """The N x N product ``A @ C.T`` kept in factored form.

    ``A`` and ``C`` are both N x m with m <= N; the product itself is
    never formed.
    """

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if A.ndim != 2 or C.ndim != 2:
            raise ValueError("factors must be two-dimensional arrays")
        if A.shape != C.shape:
            raise ValueError(f"factor shapes differ: {A.shape} vs {C.shape}")
        if A.shape[1] > A.shape[0]:
            raise ValueError(
                f"factor pair has more columns ({A.shape[1]}) than rows ({A.shape[0]})"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class GeneralizedEigenResult:
    """Solution of ``G v = t R v``: values descending, vectors R-orthonormal."""

    values: np.ndarray
    vectors: np.ndarray


def _require_symmetric(M, name, tol):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    scale = np.linalg.norm(M)
    asym = np.linalg.norm(M - M.T)
    if asym > tol * max(scale, 1.0):
        raise ValueError(
            f"{name} is not symmetric: ||M - M.T|| = {asym:.3e} exceeds "
            f"{tol:.1e} * max(||M||, 1) = {tol * max(scale, 1.0):.3e}"
        )
    return 0.5 * (M + M.T)


def sym_eig(M, tol=1e-10):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    M : (m, m) array
        Symmetric input.  Asymmetry beyond ``tol`` relative to the norm
        of M is rejected with a diagnostic.

    Returns
    -------
    values : (m,) array
        Eigenvalues sorted in descending order.  Ties keep the order the
        underlying factorization produced (stable sort).
    vectors : (m, m) array
        Orthonormal eigenvectors, column i pairing with ``values[i]``.
    """
    M = _require_symmetric(M, "matrix", tol)
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def _cholesky_with_pivot_diagnostic(R):
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        pass
    # Locate the first leading principal block that fails, purely for the
    # error message; R is small so the rescan is cheap.
    for k in range(R.shape[0]):
        try:
            np.linalg.cholesky(R[: k + 1, : k + 1])
        except np.linalg.LinAlgError:
            raise ValueError(
                f"right-hand matrix is not positive definite: "
                f"Cholesky factorization fails at pivot {k}"
            ) from None
    raise ValueError("right-hand matrix is not positive definite")


def generalized_sym_eig(G, R, tol=1e-10):
    """Solve the symmetric-definite pencil ``G v = t R v``.

    Works by Cholesky reduction: with ``R = L L.T`` the standard
    symmetric problem ``L^-1 G L^-T = Q diag(t) Q.T`` is solved, and the
    back-transformed vectors ``V = L^-T Q`` satisfy both ``G V = R V
    diag(t)`` and the conjugacy normalization ``V.T R V = I``.

    Parameters
    ----------
    G : (m, m) array
        Symmetric.
    R : (m, m) array
        Symmetric positive definite.  A failing Cholesky pivot is
        reported by index.

    Returns
    -------
    GeneralizedEigenResult
        Values descending, vectors R-orthonormal.
    """
    G = _require_symmetric(G, "left-hand matrix", tol)
    R = _require_symmetric(R, "right-hand matrix", tol)
    if G.shape != R.shape:
        raise ValueError(f"pencil shapes differ: {G.shape} vs {R.shape}")
    L = _cholesky_with_pivot_diagnostic(R)
    T = np.linalg.solve(L, G)
    M = np.linalg.solve(L, T.T).T  # L^-1 G L^-T
    vals, Q = sym_eig(0.5 * (M + M.T), tol=tol)
    V = np.linalg.solve(L.T, Q)
    return GeneralizedEigenResult(values=vals, vectors=V)


def thin_svd_product(factors: LowRankFactorPair):
    """Thin SVD of ``A @ C.T`` without forming the N x N product.

    QR-factor both thin matrices, run a dense SVD on the m x m core
    ``Ra @ Rc.T``, and rotate the orthonormal QR bases by the core's
    singular vectors.  Total cost O(N m^2).

    Returns
    -------
    U : (N, m) array
        Left singular vectors, orthonormal columns.
    sigma : (m,) array
        Singular values, descending and non-negative.  Rank-deficient
        input simply yields trailing zeros.
    V : (N, m) array
        Right singular vectors.
    """
    A, C = factors.A, factors.C
    n, m = factors.n, factors.m
    if m == 0:
        return np.zeros((n, 0)), np.zeros(0), np.zeros((n, 0))
    Qa, Ra = np.linalg.qr(A)
    Qc, Rc = np.linalg.qr(C)
    u, sigma, vt = np.linalg.svd(Ra @ Rc.T)
    return Qa @ u, sigma, Qc @ vt.T


def woodbury_solve(b0, factors: LowRankFactorPair, rhs):
    """Solve ``(b0 I + A C.T) x = rhs`` by the matrix-inversion lemma.

    Only the m x m capacitance system ``(b0 I_m + C.T A)`` is ever
    factorized:

        x = (rhs - A (b0 I + C.T A)^-1 C.T rhs) / b0

    Raises
    ------
    SolveFailure
        If the capacitance matrix is singular (condition estimate is
        included in the message).
    """
    if not np.isfinite(b0) or b0 <= 0:
        raise ValueError(f"diagonal weight b0 must be positive and finite, got {b0!r}")
    rhs = np.asarray(rhs, dtype=float)
    if factors.m == 0:
        return rhs / b0
    A, C = factors.A, factors.C
    cap = b0 * np.eye(factors.m) + C.T @ A
    cond = np.linalg.cond(cap)
    if not np.isfinite(cond) or cond > 1e14:
        raise SolveFailure(
            f"capacitance matrix is numerically singular (condition estimate {cond:.3e})"
        )
    t = np.linalg.solve(cap, C.T @ rhs)
    return (rhs - A @ t) / b0
