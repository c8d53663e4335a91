"""Desk-scale test problems with analytic gradients and curvature products.

The regression problem mirrors the classic setup of an ill-conditioned
quadratic produced by a polynomial feature expansion with hand-picked
per-feature scales; logistic regression supplies a convex non-quadratic
case.  Both expose mini-batch oracles with the draw-once / evaluate-free
cost model from :mod:`hessprec.solver`, plus two reference baselines
(averaged per-batch inverses, and conjugate gradients on noisy
products).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import LowRankFactorPair, SolveFailure, woodbury_solve
from .solver import HessianOracle

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# feature map

@dataclass(frozen=True)
class FeatureMapSpec:
    """Second-order polynomial features with optional per-feature scaling.

    The raw stacked vector is ``[x, vec(x x.T)]`` of length d + d^2.
    With ``scales=None`` the map is the identity on that stack.  With a
    scale vector of length q, the map selects the distinct monomials in
    a fixed order (the d linear terms, then the upper triangle of
    ``x x.T`` row by row, then the trace ``||x||^2``), truncates to the
    first q, and multiplies entrywise by ``scales``.  For d = 21 the
    distinct-monomial count is 21 + 231 + 1 = 253.
    """

    input_dim: int
    scales: np.ndarray | None = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if self.scales is not None:
            scales = np.asarray(self.scales, dtype=float)
            if scales.ndim != 1 or scales.size < 1:
                raise ValueError("scales must be a non-empty vector")
            if np.any(scales <= 0):
                raise ValueError("scales must be strictly positive")
            d = self.input_dim
            limit = d + d * (d + 1) // 2 + 1
            if scales.size > limit:
                raise ValueError(
                    f"at most {limit} distinct monomial features exist for input_dim={d}, "
                    f"got {scales.size} scales"
                )
            object.__setattr__(self, "scales", scales)

    @property
    def n_features(self) -> int:
        d = self.input_dim
        return d + d * d if self.scales is None else self.scales.size


def scales_log_uniform(n_features: int, lo: float = 1e-3, hi: float = 1.0):
    """Deterministic log-spaced scale profile from hi down to lo."""
    if not (0 < lo <= hi):
        raise ValueError(f"need 0 < lo <= hi, got lo={lo}, hi={hi}")
    return np.logspace(np.log10(hi), np.log10(lo), n_features)


def scales_two_band(n_features: int, head: int, head_lo: float, tail_hi: float,
                    head_hi: float = 1.0, tail_lo: float = None):
    """A dominant log-spaced head band followed by a far smaller tail band."""
    if not 1 <= head < n_features:
        raise ValueError(f"head size must be in [1, {n_features - 1}], got {head}")
    if tail_lo is None:
        tail_lo = tail_hi / 10.0
    head_scales = np.logspace(np.log10(head_hi), np.log10(head_lo), head)
    tail_scales = np.logspace(np.log10(tail_hi), np.log10(tail_lo), n_features - head)
    return np.concatenate([head_scales, tail_scales])


def raw_monomials(X, input_dim, count):
    """First ``count`` distinct monomials [x, upper-tri(x x.T), ||x||^2], unscaled."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = input_dim
    if X.shape[1] != d:
        raise ValueError(f"expected inputs of dimension {d}, got {X.shape[1]}")
    iu, ju = np.triu_indices(d)
    cols = [X, X[:, iu] * X[:, ju], np.sum(X * X, axis=1, keepdims=True)]
    full = np.concatenate(cols, axis=1)
    if count > full.shape[1]:
        raise ValueError(f"only {full.shape[1]} distinct monomials exist, need {count}")
    return full[:, :count]


def polynomial_features(X, spec: FeatureMapSpec):
    """Apply the feature map to one sample (1-d input) or a batch (2-d input)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    if Xb.shape[1] != spec.input_dim:
        raise ValueError(f"expected inputs of dimension {spec.input_dim}, got {Xb.shape[1]}")
    if spec.scales is None:
        outer = Xb[:, :, None] * Xb[:, None, :]
        feats = np.concatenate([Xb, outer.reshape(Xb.shape[0], -1)], axis=1)
    else:
        feats = raw_monomials(Xb, spec.input_dim, spec.scales.size) * spec.scales
    return feats[0] if single else feats


# ---------------------------------------------------------------------------
# regularized least squares on features

@dataclass(frozen=True)
class QuadraticProblem:
    """min_w  (alpha_reg/2) ||w||^2 + (1/2|D|) ||Phi.T w - y||^2.

    ``Phi`` holds one feature vector per column (features x data), so
    the curvature is ``Phi Phi.T / |D| + alpha_reg I``.
    """

    Phi: np.ndarray
    y: np.ndarray
    alpha_reg: float

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if Phi.ndim != 2 or y.ndim != 1 or Phi.shape[1] != y.shape[0]:
            raise ValueError(f"inconsistent shapes: Phi {Phi.shape}, y {y.shape}")
        if not (np.isfinite(self.alpha_reg) and self.alpha_reg > 0):
            raise ValueError(f"alpha_reg must be positive, got {self.alpha_reg!r}")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "y", y)

    @property
    def n_features(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_data(self) -> int:
        return self.Phi.shape[1]

    def hessian(self):
        n = self.n_data
        return self.Phi @ self.Phi.T / n + self.alpha_reg * np.eye(self.n_features)

    def loss(self, w):
        resid = self.Phi.T @ w - self.y
        return 0.5 * self.alpha_reg * float(w @ w) + 0.5 * float(np.mean(resid * resid))

    def gradient(self, w):
        resid = self.Phi.T @ w - self.y
        return self.alpha_reg * w + self.Phi @ resid / self.n_data


def squared_data_loss(Phi, y, w):
    """Unregularized half mean squared residual, for held-out reporting."""
    resid = Phi.T @ w - y
    return 0.5 * float(np.mean(resid * resid))


def exact_solution(problem: QuadraticProblem):
    """Minimizer by a dense solve of the normal equations (desk scale only)."""
    rhs = problem.Phi @ problem.y / problem.n_data
    return np.linalg.solve(problem.hessian(), rhs)


def _batch_rng(seed, counter):
    return np.random.default_rng([np.uint32(seed), np.uint32(counter)])


class QuadraticOracle(HessianOracle):
    """Mini-batch oracle for :class:`QuadraticProblem`.

    Batches are uniform without replacement within a batch and
    independent across calls; each draw seeds its own generator from the
    root seed plus a call counter, so runs replay exactly.
    """

    def __init__(self, problem: QuadraticProblem, batch_size: int, seed: int):
        if batch_size > problem.n_data:
            raise ValueError(
                f"batch_size {batch_size} exceeds data size {problem.n_data}"
            )
        super().__init__(batch_size)
        self.problem = problem
        self.seed = int(seed)
        self._counter = 0

    @property
    def dim(self) -> int:
        return self.problem.n_features

    def _draw(self):
        rng = _batch_rng(self.seed, self._counter)
        self._counter += 1
        return rng.choice(self.problem.n_data, size=self.batch_size, replace=False)

    def gradient(self, w, batch):
        Phib = self.problem.Phi[:, batch]
        resid = Phib.T @ w - self.problem.y[batch]
        return self.problem.alpha_reg * w + Phib @ resid / batch.size

    def hvp(self, w, s, batch):
        Phib = self.problem.Phi[:, batch]
        return self.problem.alpha_reg * s + Phib @ (Phib.T @ s) / batch.size


def batch_oracle(problem: QuadraticProblem, batch_size: int, seed: int) -> QuadraticOracle:
    return QuadraticOracle(problem, batch_size, seed)


# ---------------------------------------------------------------------------
# logistic regression

def sigmoid(z):
    # tanh form: exact and overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class LogisticProblem:
    """Binary logistic regression with labels in {-1, +1} and L2 weight decay.

    min_w  (1/|D|) sum_i log(1 + exp(-y_i x_i.T w)) + (reg/2) ||w||^2

    The data-term curvature ``(1/|D|) sum pi (1 - pi) x x.T`` is exact
    here (the second-order label term vanishes for this likelihood), so
    the Gauss-Newton matrix and the full Hessian coincide.
    """

    X: np.ndarray
    labels: np.ndarray
    reg: float

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or labels.shape != (X.shape[0],):
            raise ValueError(f"inconsistent shapes: X {X.shape}, labels {labels.shape}")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not (np.isfinite(self.reg) and self.reg > 0):
            raise ValueError(f"reg must be positive, got {self.reg!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n_data(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def loss(self, w):
        margins = self.labels * (self.X @ w)
        return float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * self.reg * float(w @ w)

    def gradient(self, w):
        margins = self.labels * (self.X @ w)
        coeff = -self.labels * sigmoid(-margins)
        return self.X.T @ coeff / self.n_data + self.reg * w

    def hessian_at(self, w):
        z = self.X @ w
        d = sigmoid(z) * sigmoid(-z)
        return (self.X * d[:, None]).T @ self.X / self.n_data + self.reg * np.eye(self.n_features)

    def accuracy(self, w):
        return float(np.mean((self.X @ w > 0) == (self.labels > 0)))


class LogisticOracle(HessianOracle):
    def __init__(self, problem: LogisticProblem, batch_size: int, seed: int):
        if batch_size > problem.n_data:
            raise ValueError(f"batch_size {batch_size} exceeds data size {problem.n_data}")
        super().__init__(batch_size)
        self.problem = problem
        self.seed = int(seed)
        self._counter = 0

    @property
    def dim(self) -> int:
        return self.problem.n_features

    def _draw(self):
        rng = _batch_rng(self.seed, self._counter)
        self._counter += 1
        return rng.choice(self.problem.n_data, size=self.batch_size, replace=False)

    def gradient(self, w, batch):
        Xb = self.problem.X[batch]
        yb = self.problem.labels[batch]
        coeff = -yb * sigmoid(-yb * (Xb @ w))
        return Xb.T @ coeff / batch.size + self.problem.reg * w

    def hvp(self, w, s, batch):
        Xb = self.problem.X[batch]
        z = Xb @ w
        d = sigmoid(z) * sigmoid(-z)
        return Xb.T @ (d * (Xb @ s)) / batch.size + self.problem.reg * s


def logistic_oracle(problem: LogisticProblem, batch_size: int, seed: int) -> LogisticOracle:
    return LogisticOracle(problem, batch_size, seed)


# ---------------------------------------------------------------------------
# baselines

def avg_inv_baseline(problem: QuadraticProblem, batch_size: int, n_batches: int,
                     seed: int, callback=None):
    """Average of per-batch ridge solutions.

    Each batch solves its own normal equations exactly (through the
    inversion lemma, so only a batch-sized system is factorized) and the
    w estimates are averaged.  The per-batch inverse is biased for the
    inverse of the averaged curvature, which is the point of comparing
    against it.  Numerically failing batches are skipped with a warning.

    ``callback(i, w_running_mean)`` fires after each batch.
    """
    if n_batches < 1:
        raise ValueError(f"n_batches must be at least 1, got {n_batches}")
    if batch_size > problem.n_data:
        raise ValueError(f"batch_size {batch_size} exceeds data size {problem.n_data}")
    total = np.zeros(problem.n_features)
    used = 0
    for t in range(n_batches):
        rng = _batch_rng(seed, t)
        idx = rng.choice(problem.n_data, size=batch_size, replace=False)
        Phib = problem.Phi[:, idx]
        rhs = Phib @ problem.y[idx] / batch_size
        try:
            if batch_size <= problem.n_features:
                wt = woodbury_solve(problem.alpha_reg,
                                    LowRankFactorPair(Phib / batch_size, Phib), rhs)
            else:
                Hb = Phib @ Phib.T / batch_size \
                    + problem.alpha_reg * np.eye(problem.n_features)
                wt = np.linalg.solve(Hb, rhs)
        except (SolveFailure, np.linalg.LinAlgError) as exc:
            log.warning("skipping batch %d in averaged-inverse baseline (%s)", t, exc)
            continue
        total += wt
        used += 1
        if callback is not None:
            callback(t, total / used)
    if used == 0:
        raise SolveFailure("every batch failed in the averaged-inverse baseline")
    return total / used


def cg_baseline(oracle: HessianOracle, b, iters: int, callback=None):
    """Conjugate gradients on ``B w = b`` driven by (possibly noisy) products.

    Textbook CG from zero.  Divergence is expected under noise and is
    recorded, not raised: the run stops and flags when the residual goes
    non-finite, the curvature term ``p.T B p`` stops being positive, or
    the residual norm grows past 10x its starting value.  Because the
    recursively updated residual goes blind once resampled products stop
    being consistent with each other, each iteration also recomputes the
    residual from a fresh product; when the recomputed norm exceeds 10x
    the recursive one (and is not itself at convergence level), the
    recurrence has lost coherence and the run is flagged as diverged.

    Returns ``(w, diverged)``.  ``callback(t, w, residual_norm)`` fires
    per completed iteration with the recursive residual norm.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    rs = float(r @ r)
    r0 = np.sqrt(rs)
    if r0 == 0 or iters < 1:
        return x, False
    p = r.copy()
    diverged = False
    for t in range(iters):
        Ap = oracle.noisy_hvp(x, p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0:
            diverged = True
            break
        step = rs / pAp
        x = x + step * p
        r = r - step * Ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            diverged = True
            break
        if callback is not None:
            callback(t, x.copy(), np.sqrt(rs_new))
        rnorm = np.sqrt(rs_new)
        if rnorm > 10.0 * r0:
            diverged = True
            break
        check = np.linalg.norm(b - oracle.noisy_hvp(x, x))
        if not np.isfinite(check) or (check > 10.0 * rnorm and check > 1e-2 * r0):
            diverged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, diverged
