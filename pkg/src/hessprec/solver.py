"""Active probing loop: choose directions with the current posterior.

Each iteration solves the current estimate against the latest gradient
to pick the next probe direction, observes a noisy Hessian product along
it, refreshes the gradient on the same mini-batch, and re-runs the
posterior update on everything collected so far.  With exact products
the probes reproduce the Krylov sequence of the underlying matrix; with
noise they stay close to it while the posterior absorbs the error.
"""
from __future__ import annotations

import abc
import logging
import time
from dataclasses import dataclass

import numpy as np

from .inference import (
    MatrixPrior,
    NoiseModel,
    ObservationSet,
    PosteriorMean,
    infer_noisy,
)
from .linalg import SolveFailure

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Raised when scale estimation fails on the sampled batches."""


class HessianOracle(abc.ABC):
    """Source of mini-batch gradients and Hessian-vector products.

    The unit of cost is a *loaded batch*: ``draw_batch`` fetches a fresh
    independent mini-batch and charges ``batch_size`` samples to the
    ``data_read`` counter.  Evaluating a gradient or a product on an
    already-loaded batch is free, so a caller that needs both from the
    same data pays for it once.  The convenience wrappers
    ``noisy_gradient`` / ``noisy_hvp`` draw their own batch per call.
    """

    def __init__(self, batch_size: int):
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        self.batch_size = int(batch_size)
        self.data_read = 0

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Dimension of the parameter vector."""

    @abc.abstractmethod
    def _draw(self):
        """Return a handle for one fresh independent mini-batch."""

    @abc.abstractmethod
    def gradient(self, w, batch):
        """Mini-batch gradient at ``w`` on a previously drawn batch."""

    @abc.abstractmethod
    def hvp(self, w, s, batch):
        """Mini-batch Hessian product with ``s`` on a previously drawn batch."""

    def draw_batch(self):
        batch = self._draw()
        self.data_read += self.batch_size
        return batch

    def noisy_gradient(self, w):
        return self.gradient(w, self.draw_batch())

    def noisy_hvp(self, w, s):
        return self.hvp(w, s, self.draw_batch())


@dataclass(frozen=True)
class PriorEstimates:
    """Data-driven scales for the prior and noise model, plus the mean gradient."""

    b0: float
    w0: float
    lam0: float
    mean_grad: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.b0) and self.b0 > 0):
            raise ValueError(f"estimated b0 must be positive, got {self.b0!r}")
        if not (np.isfinite(self.w0) and self.w0 > 0):
            raise ValueError(f"estimated w0 must be positive, got {self.w0!r}")
        if not (np.isfinite(self.lam0) and self.lam0 >= 0):
            raise ValueError(f"estimated lam0 must be non-negative, got {self.lam0!r}")
        object.__setattr__(self, "mean_grad", np.asarray(self.mean_grad, dtype=float))


@dataclass(frozen=True)
class SolverConfig:
    iterations: int
    init_samples: int = 5
    normalize_probes: bool = True
    mode: str = "full"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")
        if self.init_samples < 2:
            raise ValueError(f"init_samples must be at least 2, got {self.init_samples}")
        if self.mode not in ("full", "scalar"):
            raise ValueError(f"mode must be 'full' or 'scalar', got {self.mode!r}")


@dataclass(frozen=True)
class IterationRecord:
    """One line of the per-iteration solver log."""

    iteration: int
    probe_norm: float
    data_read: int
    wall_ms: float


def estimate_parameters(oracle: HessianOracle, w, init_samples=5, mode="full") -> PriorEstimates:
    """Estimate prior/noise scales from a handful of mini-batches.

    Draws ``init_samples`` independent batches, averages their gradients
    into a probe ``s``, then evaluates the curvature product along ``s``
    on the *same* batches (each batch is loaded once and charged once).
    From the means ``s`` and ``ybar``:

        w0 = (s . ybar) / (s . s)

    and the prior mean scale b0 comes from the curvature magnitude along
    s, either as ``sqrt(ybar . ybar / s . ybar)`` ("full" mode) or as
    the plain Rayleigh-style ratio ``(ybar . ybar) / (s . ybar)``
    ("scalar" mode, used directly as an inverse step length).

    The noise weight lam0 is a plug-in variance estimate of the gradient
    samples: in full mode the median over coordinates of the
    per-coordinate variance, divided by ``||s||``; in scalar mode
    ``sqrt((mean ||g_k||^2 - ||gbar||^2) / n)``.  Exact oracles yield
    lam0 = 0.

    Raises
    ------
    EstimationError
        If the mean gradient is zero, or the curvature along it is not
        positive (retry with fresh batches in that case).
    """
    if init_samples < 2:
        raise ValueError(f"need at least 2 samples to estimate scales, got {init_samples}")
    w = np.asarray(w, dtype=float)
    batches = [oracle.draw_batch() for _ in range(init_samples)]
    grads = np.stack([oracle.gradient(w, b) for b in batches])
    gbar = grads.mean(axis=0)
    if np.linalg.norm(gbar) == 0:
        raise EstimationError("mean gradient is zero; nothing to probe")
    s = gbar
    ys = np.stack([oracle.hvp(w, s, b) for b in batches])
    ybar = ys.mean(axis=0)
    sty = float(s @ ybar)
    if not np.isfinite(sty) or sty <= 0:
        raise EstimationError(
            f"curvature along the mean gradient is not positive (s.y = {sty:.3e}); "
            "retry with fresh batches"
        )
    sts = float(s @ s)
    yty = float(ybar @ ybar)
    w0 = sty / sts
    n = s.size
    if mode == "full":
        b0 = np.sqrt(yty / sty)
        per_coord_var = grads.var(axis=0)  # population (plug-in) variance
        lam0 = float(np.median(per_coord_var)) / np.sqrt(sts)
    elif mode == "scalar":
        b0 = yty / sty
        mean_sq = float(np.mean(np.sum(grads * grads, axis=1)))
        lam0 = np.sqrt(max(0.0, mean_sq - float(gbar @ gbar)) / n)
    else:
        raise ValueError(f"mode must be 'full' or 'scalar', got {mode!r}")
    return PriorEstimates(b0=float(b0), w0=float(w0), lam0=float(lam0), mean_grad=gbar)


def next_direction(post: PosteriorMean, r, normalize=False):
    """Probe direction ``-B^-1 r`` for the current estimate B.

    Falls back to the prior-scaled gradient ``-r / b0`` (with a logged
    warning) when the low-rank solve fails numerically.
    """
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r) == 0:
        raise ValueError("residual is zero; no probe direction exists")
    try:
        s = -post.solve(r)
    except SolveFailure as exc:
        log.warning("posterior solve failed (%s); falling back to gradient direction", exc)
        s = -r / post.prior.b0
    if normalize:
        s = s / np.linalg.norm(s)
    return s


def run_inference(oracle: HessianOracle, w, estimates: PriorEstimates,
                  config: SolverConfig, callback=None) -> PosteriorMean:
    """Run the active probing loop and return the final posterior mean.

    Per iteration: pick a direction with ``next_direction`` against the
    latest gradient, load one fresh batch, observe the curvature product
    along the (optionally normalized) probe and refresh the gradient on
    that same batch, then re-run the posterior update on all collected
    observations.  If an update fails (for instance a dependent probe in
    the exact-product case once the reachable subspace is exhausted) the
    previous posterior is returned with a warning.

    ``callback``, if given, receives one ``IterationRecord`` per
    completed iteration.
    """
    w = np.asarray(w, dtype=float)
    n = oracle.dim
    prior = MatrixPrior(b0=estimates.b0, w0=estimates.w0, n=n)
    noise = NoiseModel(lam0=estimates.lam0)
    post = PosteriorMean(prior=prior, A=np.zeros((n, 0)), C=np.zeros((n, 0)))
    r = np.asarray(estimates.mean_grad, dtype=float)
    probes: list[np.ndarray] = []
    products: list[np.ndarray] = []
    for i in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        raw = next_direction(post, r)
        probe_norm = float(np.linalg.norm(raw))
        s = raw / probe_norm if config.normalize_probes else raw
        batch = oracle.draw_batch()
        y = oracle.hvp(w, s, batch)
        r = oracle.gradient(w, batch)
        probes.append(s)
        products.append(y)
        obs = ObservationSet.from_probes(
            np.column_stack(probes), np.column_stack(products), noise.lam0
        )
        try:
            post = infer_noisy(prior, noise, obs)
        except (ValueError, SolveFailure) as exc:
            log.warning(
                "posterior update failed at iteration %d (%s); keeping previous estimate",
                i, exc,
            )
            return post
        if callback is not None:
            wall_ms = (time.perf_counter() - t0) * 1e3
            callback(IterationRecord(iteration=i, probe_norm=probe_norm,
                                     data_read=oracle.data_read, wall_ms=wall_ms))
    return post
