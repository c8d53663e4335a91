"""Turn a posterior matrix estimate into an SGD pre-conditioner.

The estimate's low-rank part is compressed to its top-k spectral
directions U, sigma.  The pre-conditioner

    P = alpha * (I + U (beta / sqrt(sigma) - 1) U.T)

rescales curvature along U to a flat level beta^2 while the global
factor alpha^2 = sigma_1 / sigma_k stretches the step on everything
else by the measured conditioning improvement.  The optimizer applies
P^2 to each gradient, which costs O(N k).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import LowRankFactorPair, thin_svd_product
from .solver import PriorEstimates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralApprox:
    """Top-k spectral directions of the estimated curvature: B ~ U diag(sigma) U.T."""

    U: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if U.ndim != 2 or sigma.ndim != 1 or U.shape[1] != sigma.shape[0]:
            raise ValueError(f"inconsistent shapes: U {U.shape}, sigma {sigma.shape}")
        k = sigma.size
        if k:
            if np.any(sigma <= 0):
                raise ValueError("sigma entries must be positive")
            if np.any(np.diff(sigma) > 0):
                raise ValueError("sigma must be sorted descending")
            gram_err = np.linalg.norm(U.T @ U - np.eye(k))
            if gram_err > 1e-8:
                raise ValueError(f"U columns are not orthonormal (||U.T U - I|| = {gram_err:.3e})")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "sigma", sigma)

    @property
    def k(self) -> int:
        return self.sigma.size

    @property
    def n(self) -> int:
        return self.U.shape[0]


@dataclass(frozen=True)
class Preconditioner:
    spectral: SpectralApprox
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta!r}")

    def storage_floats(self) -> int:
        """Floats held beyond the parameter vector itself: O(N k)."""
        return self.spectral.U.size + self.spectral.sigma.size + 2


@dataclass(frozen=True)
class ScalarStep:
    """A bare learning rate, for the mode that skips the projection entirely."""

    eta: float

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"step length must be positive, got {self.eta!r}")


def reduce_rank(post, k: int) -> SpectralApprox:
    """Compress the posterior's low-rank part to its top-k left directions.

    Runs the thin SVD of ``A @ C.T`` (O(N m^2), the N x N product is
    never formed) and keeps the k leading left singular vectors and
    values.  If the requested rank runs into numerically zero singular
    values (below ``1e-12 * sigma_1``) the rank is reduced to the
    numerical rank with a warning rather than inverting noise.
    """
    if not 1 <= k <= post.m:
        raise ValueError(f"rank k must be in [1, {post.m}], got {k}")
    U, sigma, _ = thin_svd_product(LowRankFactorPair(post.A, post.C))
    if sigma[0] == 0:
        effective = 0
    else:
        effective = int(np.sum(sigma > 1e-12 * sigma[0]))
    if k > effective:
        log.warning("requested rank %d exceeds numerical rank %d; reducing", k, effective)
        k = effective
    return SpectralApprox(U=U[:, :k], sigma=sigma[:k])


def build(spectral: SpectralApprox, beta: float = 1.0, base_lr: float = 1.0):
    """Assemble the pre-conditioner and hand back the loop learning rate.

    ``alpha^2`` is the ratio of the largest to the smallest retained
    value, ``sigma_1 / sigma_k`` (1 when fewer than two directions are
    kept).  The returned learning rate is ``base_lr`` unchanged: the
    conditioning-improvement factor is applied exactly once, inside
    ``P^2``, never a second time on the step length.
    """
    if spectral.k <= 1:
        alpha = 1.0
    else:
        alpha = float(np.sqrt(spectral.sigma[0] / spectral.sigma[-1]))
    return Preconditioner(spectral=spectral, alpha=alpha, beta=beta), base_lr


def apply_p_squared(precond: Preconditioner, g):
    """Apply ``P^2`` to a gradient in O(N k).

    Expanding P^2 with orthonormal U:

        P^2 g = alpha^2 * (g - U (U.T g) + U diag(beta^2 / sigma) (U.T g))

    so the complement of span(U) is scaled by alpha^2 alone, and each
    retained direction by alpha^2 * beta^2 / sigma_i.
    """
    g = np.asarray(g, dtype=float)
    sp = precond.spectral
    a2 = precond.alpha ** 2
    if sp.k == 0:
        return a2 * g
    t = sp.U.T @ g
    return a2 * (g - sp.U @ t + sp.U @ ((precond.beta ** 2 / sp.sigma) * t))


def apply_flops(n: int, k: int) -> int:
    """Arithmetic estimate for one ``apply_p_squared`` call: O(N k)."""
    # two thin products (2 N k multiply-adds each), the diagonal rescale,
    # and the vector combination
    return 4 * n * k + 3 * k + 3 * n


def precond_to_dict(precond: Preconditioner) -> dict:
    sp = precond.spectral
    return {
        "kind": "preconditioner",
        "n": sp.n,
        "k": sp.k,
        "alpha": precond.alpha,
        "beta": precond.beta,
        "sigma": sp.sigma.tolist(),
        "U": sp.U.ravel().tolist(),
    }


def precond_from_dict(payload: dict) -> Preconditioner:
    if payload.get("kind") != "preconditioner":
        raise ValueError(f"not a preconditioner payload: kind={payload.get('kind')!r}")
    n, k = int(payload["n"]), int(payload["k"])
    spectral = SpectralApprox(
        U=np.asarray(payload["U"], dtype=float).reshape(n, k),
        sigma=np.asarray(payload["sigma"], dtype=float),
    )
    return Preconditioner(spectral=spectral, alpha=float(payload["alpha"]),
                          beta=float(payload["beta"]))


def scalar_step(estimates: PriorEstimates, previous: float | None = None) -> ScalarStep:
    """Learning rate from the scalar curvature estimate: ``eta = 1 / b0``.

    A non-positive or non-finite estimate keeps the previous step with a
    warning (and is an error when there is nothing to keep).
    """
    eta = 1.0 / estimates.b0
    if not (np.isfinite(eta) and eta > 0):
        if previous is None:
            raise ValueError(f"scalar step estimate is unusable ({eta!r}) and no fallback given")
        log.warning("scalar step estimate unusable (%r); keeping previous %g", eta, previous)
        return ScalarStep(eta=previous)
    return ScalarStep(eta=float(eta))
