"""Gaussian inference on a latent symmetric matrix from noisy projections.

The model: an unknown N x N matrix B is observed through products
``Y = B S + noise`` for a thin probe matrix S.  The prior mean is
``b0 * I``; prior covariance and observation noise are both scaled
identities (weights ``w0`` and ``lam0``), and the per-column noise
magnitude additionally carries the squared probe norm.  Under these
assumptions the posterior mean is ``b0 * I`` plus a rank-m correction
``A @ C.T`` that this module computes without ever forming an N x N
matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import LowRankFactorPair, generalized_sym_eig, woodbury_solve


@dataclass(frozen=True)
class MatrixPrior:
    """Prior over the latent matrix: mean ``b0 * I``, covariance weight w0."""

    b0: float
    w0: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.b0):
            raise ValueError(f"prior mean scale b0 must be finite, got {self.b0!r}")
        if not (np.isfinite(self.w0) and self.w0 > 0):
            raise ValueError(f"prior covariance weight w0 must be positive, got {self.w0!r}")
        if self.n < 1:
            raise ValueError(f"matrix dimension must be at least 1, got {self.n}")


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise weight; zero means exact products."""

    lam0: float

    def __post_init__(self):
        if not (np.isfinite(self.lam0) and self.lam0 >= 0):
            raise ValueError(f"noise weight lam0 must be non-negative, got {self.lam0!r}")


@dataclass(frozen=True)
class ObservationSet:
    """Probe directions S, observed products Y, per-column noise magnitudes."""

    S: np.ndarray
    Y: np.ndarray
    noise_diag: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        nd = np.atleast_1d(np.asarray(self.noise_diag, dtype=float))
        if S.shape != Y.shape:
            raise ValueError(f"probe and product shapes differ: {S.shape} vs {Y.shape}")
        if nd.shape != (S.shape[1],):
            raise ValueError(
                f"noise_diag must have one entry per probe column, got shape {nd.shape} "
                f"for {S.shape[1]} columns"
            )
        if np.any(nd < 0):
            raise ValueError("noise_diag entries must be non-negative")
        norms = np.linalg.norm(S, axis=0)
        zero = np.where(norms == 0)[0]
        if zero.size:
            raise ValueError(f"probe column {zero[0]} is identically zero")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "noise_diag", nd)

    @classmethod
    def from_probes(cls, S, Y, lam0):
        """Build the set with the standard noise law ``lam0 * ||s_i||^2``."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        return cls(S=S, Y=Y, noise_diag=lam0 * np.sum(S * S, axis=0))

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class PosteriorMean:
    """Posterior mean estimate ``b0 * I + A @ C.T`` in factored form."""

    prior: MatrixPrior
    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if A.shape != C.shape or A.ndim != 2:
            raise ValueError(f"bad factor shapes: {A.shape} vs {C.shape}")
        if A.shape[0] != self.prior.n:
            raise ValueError(
                f"factor row count {A.shape[0]} does not match prior dimension {self.prior.n}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.prior.n

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def b0(self) -> float:
        return self.prior.b0

    def apply(self, v):
        """Matrix-vector product ``(b0 I + A C.T) v`` in O(N m)."""
        v = np.asarray(v, dtype=float)
        if self.m == 0:
            return self.b0 * v
        return self.b0 * v + self.A @ (self.C.T @ v)

    def solve(self, v):
        """Solve ``(b0 I + A C.T) x = v`` in O(N m^2) via the inversion lemma.

        Raises ``SolveFailure`` when the capacitance system is singular;
        callers that have a cheaper fallback should catch it.
        """
        if not (np.isfinite(self.b0) and self.b0 > 0):
            from .linalg import SolveFailure

            raise SolveFailure(f"cannot invert posterior with b0 = {self.b0!r}")
        return woodbury_solve(self.b0, LowRankFactorPair(self.A, self.C), v)

    def dense(self):
        """Materialize the N x N estimate.  Test and toy-problem use only."""
        return self.b0 * np.eye(self.n) + self.A @ self.C.T


def _empty_posterior(prior):
    z = np.zeros((prior.n, 0))
    return PosteriorMean(prior=prior, A=z, C=z.copy())


def infer_noise_free(prior: MatrixPrior, obs: ObservationSet) -> PosteriorMean:
    """Posterior mean for exact (noiseless) products.

    With zero observation noise the update interpolates: the returned
    estimate satisfies ``B_m @ S = Y`` exactly, and reduces to

        B_m = b0 I + (Y - b0 S) (S.T W S)^-1 S.T W,   W = w0 I.

    The probe columns must be linearly independent; the first dependent
    column is reported by index.
    """
    if obs.m == 0:
        return _empty_posterior(prior)
    if np.any(obs.noise_diag != 0):
        raise ValueError("noise-free update called with nonzero noise_diag")
    if obs.n != prior.n:
        raise ValueError(f"observation dimension {obs.n} does not match prior {prior.n}")
    S, Y = obs.S, obs.Y
    # QR without pivoting processes columns left to right, so a tiny
    # diagonal entry of R flags the first column with (numerically) no
    # component outside the span of its predecessors.
    Rfac = np.linalg.qr(S, mode="r")
    diag = np.abs(np.diag(Rfac))
    col_norms = np.linalg.norm(S, axis=0)
    bad = np.where(diag <= 1e-12 * col_norms)[0]
    if bad.size:
        raise ValueError(
            f"probe column {bad[0]} is linearly dependent on earlier columns; "
            "the noise-free update cannot use it"
        )
    delta = Y - prior.b0 * S
    gram = prior.w0 * (S.T @ S)
    A = np.linalg.solve(gram, delta.T).T  # delta @ gram^-1
    C = prior.w0 * S
    return PosteriorMean(prior=prior, A=A, C=C)


def infer_noisy(prior: MatrixPrior, noise: NoiseModel, obs: ObservationSet) -> PosteriorMean:
    """Posterior mean for noisy products.

    The correction solves the structured system

        (W x S.T W S + Lam x noise_diag) vec X = vec(Y - b0 S)

    where "x" couples row and column factors (row-major vectorization).
    Only the column-side factor needs an actual generalized
    eigendecomposition, of the pencil

        (S.T W S) v = t * diag(noise_diag) v.

    The row side involves the pair of scaled identities (W, Lam) =
    (w0 I, lam0 I), whose conjugate factorization is closed-form: the
    vectors are ``I / sqrt(lam0)`` and every value equals ``w0 / lam0``.
    Substituting that factorization into the joint solution collapses
    the row dimension out entirely:

        X = Delta V diag(1 / (w0 * t_i + lam0)) V.T,

    with (t, V) from the column pencil above.  Cost is O(N m + m^3)
    beyond the products with Delta, independent of N otherwise.

    The returned factors are ``A = w0 X`` and ``C = w0 S``, so that
    ``b0 I + A C.T`` equals the posterior mean ``b0 I + W X S.T W``.
    """
    if noise.lam0 == 0:
        return infer_noise_free(prior, obs)
    if obs.m == 0:
        return _empty_posterior(prior)
    if obs.n != prior.n:
        raise ValueError(f"observation dimension {obs.n} does not match prior {prior.n}")
    if np.any(obs.noise_diag <= 0):
        raise ValueError("noisy update requires strictly positive noise_diag entries")
    S, Y = obs.S, obs.Y
    w0, lam0 = prior.w0, noise.lam0
    delta = Y - prior.b0 * S
    pencil = generalized_sym_eig(w0 * (S.T @ S), np.diag(obs.noise_diag))
    V, omega = pencil.vectors, pencil.values
    coeff = 1.0 / (w0 * omega + lam0)
    X = ((delta @ V) * coeff) @ V.T
    return PosteriorMean(prior=prior, A=w0 * X, C=w0 * S)


# ---------------------------------------------------------------------------
# serialization

def posterior_to_dict(post: PosteriorMean) -> dict:
    return {
        "kind": "posterior_mean",
        "n": post.n,
        "m": post.m,
        "b0": post.prior.b0,
        "w0": post.prior.w0,
        "A": post.A.ravel().tolist(),
        "C": post.C.ravel().tolist(),
    }


def posterior_from_dict(payload: dict) -> PosteriorMean:
    if payload.get("kind") != "posterior_mean":
        raise ValueError(f"not a posterior_mean payload: kind={payload.get('kind')!r}")
    n, m = int(payload["n"]), int(payload["m"])
    prior = MatrixPrior(b0=float(payload["b0"]), w0=float(payload["w0"]), n=n)
    A = np.asarray(payload["A"], dtype=float).reshape(n, m)
    C = np.asarray(payload["C"], dtype=float).reshape(n, m)
    return PosteriorMean(prior=prior, A=A, C=C)


def save_posterior(path, post: PosteriorMean):
    """Write the posterior to ``path`` as a JSON document (row-major factors)."""
    with open(path, "w") as fh:
        json.dump(posterior_to_dict(post), fh)
        fh.write("\n")


def load_posterior(path) -> PosteriorMean:
    with open(path) as fh:
        return posterior_from_dict(json.load(fh))
