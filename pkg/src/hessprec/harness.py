"""Experiment harness: configs, optimizer loops, baselines, comparisons.

All loops share a cost axis: cumulative samples loaded from disk
(``data_read``), charged through the oracle including everything spent
on pre-conditioner construction, so curves from different methods are
directly comparable.  Runs are deterministic given (config, seed); wall
times are recorded only when ``timing`` is enabled and written as 0.0
otherwise so that emitted CSVs are byte-for-byte reproducible.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import data as datagen
from .linalg import SolveFailure
from .mlp import MLPOracle, ToyNet
from .precond import apply_p_squared, build, reduce_rank, scalar_step
from .problems import (
    FeatureMapSpec,
    LogisticProblem,
    QuadraticProblem,
    avg_inv_baseline,
    batch_oracle,
    cg_baseline,
    exact_solution,
    logistic_oracle,
    polynomial_features,
    scales_log_uniform,
    scales_two_band,
    squared_data_loss,
)
from .solver import EstimationError, SolverConfig, estimate_parameters, run_inference

log = logging.getLogger(__name__)

RUN_CSV_COLUMNS = ("step", "data_read", "train_loss", "test_loss",
                   "test_accuracy", "step_length", "wall_ms")

OPTIMIZERS = ("sgd", "precond_sgd", "avg_inv", "cg", "newton_oracle")


class ConfigError(ValueError):
    """Bad or inconsistent configuration (CLI exit code 1)."""


# ---------------------------------------------------------------------------
# configuration

def _take(d, key, default):
    return d.pop(key) if key in d else default


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    data: str | None = None
    n_samples: int = 44484
    input_dim: int = 21
    n_features: int = 253
    alpha_reg: float = 1e-4
    reg: float = 1e-3
    noise: float = 0.05
    signal_dim: int | None = None
    equal_coef: bool = False
    scales: object = None
    hidden: tuple = (32, 16)
    n_classes: int = 10
    separation: float = 3.0
    test_fraction: float = 0.2
    data_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic", "mlp"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.scales, list):
            object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        elif isinstance(self.scales, dict):
            object.__setattr__(self, "scales", tuple(sorted(self.scales.items())))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name in d:
                kwargs[name] = d.pop(name)
        if d:
            raise ConfigError(f"unknown problem config keys: {sorted(d)}")
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def scale_vector(self):
        """Materialize the per-feature scale profile as an array."""
        s = self.scales
        if s is None:
            return scales_log_uniform(self.n_features, 1e-3, 1.0)
        if isinstance(s, tuple) and s and isinstance(s[0], tuple):
            opts = dict(s)
            profile = opts.pop("profile", "log_uniform")
            try:
                if profile == "log_uniform":
                    return scales_log_uniform(self.n_features,
                                              lo=float(opts.pop("lo", 1e-3)),
                                              hi=float(opts.pop("hi", 1.0)))
                if profile == "two_band":
                    return scales_two_band(self.n_features,
                                           head=int(opts.pop("head", 16)),
                                           head_lo=float(opts.pop("head_lo", 1e-2)),
                                           head_hi=float(opts.pop("head_hi", 1.0)),
                                           tail_hi=float(opts.pop("tail_hi", 1e-4)),
                                           tail_lo=opts.pop("tail_lo", None))
            finally:
                if opts:
                    raise ConfigError(f"unknown scale options: {sorted(opts)}")
            raise ConfigError(f"unknown scale profile {profile!r}")
        arr = np.asarray(s, dtype=float)
        if arr.size != self.n_features:
            raise ConfigError(
                f"explicit scales have {arr.size} entries but n_features={self.n_features}"
            )
        return arr


@dataclass(frozen=True)
class SolverSettings:
    iterations: int = 16
    init_samples: int = 5
    rank: int = 16
    beta: float = 1.0
    mode: str = "full"
    normalize_probes: bool = True

    def __post_init__(self):
        if self.mode not in ("full", "scalar"):
            raise ConfigError(f"solver mode must be 'full' or 'scalar', got {self.mode!r}")
        if self.iterations < 1 or self.init_samples < 2 or self.rank < 1:
            raise ConfigError("solver iterations/init_samples/rank out of range")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kwargs = {k: d.pop(k) for k in list(d) if k in cls.__dataclass_fields__}
        if d:
            raise ConfigError(f"unknown solver config keys: {sorted(d)}")
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    optimizer: str = "sgd"
    batch_size: int = 256
    lr: float = 0.1
    steps: int | None = None
    epochs: float | None = None
    rebuild_every: int = 1
    warmup: bool = True
    record_every: int = 10
    seed: int = 0
    timing: bool = False
    target_loss: float | None = None
    target_suboptimality: float | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr < 0 or not np.isfinite(self.lr):
            raise ConfigError(f"lr must be a non-negative finite number, got {self.lr}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be positive, got {self.record_every}")
        if self.rebuild_every < 1:
            raise ConfigError(f"rebuild_every must be positive, got {self.rebuild_every}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        problem = ProblemConfig.from_dict(d.pop("problem", {}))
        solver = SolverSettings.from_dict(d.pop("solver", {}))
        kwargs = {k: d.pop(k) for k in list(d) if k in cls.__dataclass_fields__}
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        try:
            return cls(problem=problem, solver=solver, **kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def n_steps(self, n_train):
        if self.steps is not None:
            if self.steps < 1:
                raise ConfigError(f"steps must be positive, got {self.steps}")
            return int(self.steps)
        if self.epochs is not None:
            return max(1, math.ceil(self.epochs * n_train / self.batch_size))
        raise ConfigError("either steps or epochs must be set")


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if overrides:
        payload = merge_config(payload, overrides)
    return ExperimentConfig.from_dict(payload)


def merge_config(base, over):
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# run records

@dataclass(frozen=True)
class RunRecord:
    step: int
    data_read: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    step_length: float
    wall_ms: float


@dataclass
class RunResult:
    records: list
    diverged: bool
    w: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def final(self) -> RunRecord:
        return self.records[-1]


def _fmt(x):
    x = float(x)
    return repr(x)


def write_run_csv(path, records, extra_label=None):
    """Write records in the exact run-CSV schema (optionally labeled)."""
    with open(path, "w") as fh:
        head = RUN_CSV_COLUMNS if extra_label is None else ("optimizer",) + RUN_CSV_COLUMNS
        fh.write(",".join(head) + "\n")
        for rec in records:
            row = [str(rec.step), str(rec.data_read), _fmt(rec.train_loss),
                   _fmt(rec.test_loss), _fmt(rec.test_accuracy),
                   _fmt(rec.step_length), _fmt(rec.wall_ms)]
            if extra_label is not None:
                row.insert(0, extra_label)
            fh.write(",".join(row) + "\n")


def write_comparison_csv(path, labeled_records):
    with open(path, "w") as fh:
        fh.write(",".join(("optimizer",) + RUN_CSV_COLUMNS) + "\n")
        for label, rec in labeled_records:
            fh.write(",".join([label, str(rec.step), str(rec.data_read),
                               _fmt(rec.train_loss), _fmt(rec.test_loss),
                               _fmt(rec.test_accuracy), _fmt(rec.step_length),
                               _fmt(rec.wall_ms)]) + "\n")


# ---------------------------------------------------------------------------
# problem bundles

class QuadraticBundle:
    kind = "quadratic"

    def __init__(self, pc: ProblemConfig):
        if pc.data is not None:
            X, y = datagen.read_dataset(pc.data)
            if X.shape[1] != pc.input_dim:
                raise ConfigError(
                    f"dataset {pc.data} has {X.shape[1]} features, config says {pc.input_dim}"
                )
        else:
            X, y = datagen.gen_regression(pc.data_seed, pc.n_samples, pc.input_dim,
                                          pc.n_features, pc.noise, pc.signal_dim,
                                          pc.equal_coef)
        spec = FeatureMapSpec(pc.input_dim, pc.scale_vector())
        Phi = polynomial_features(X, spec).T  # features x samples
        tr, te = datagen.train_test_split(Phi.shape[1], pc.test_fraction, pc.data_seed)
        self.problem = QuadraticProblem(Phi[:, tr], y[tr], pc.alpha_reg)
        self._test = (Phi[:, te], y[te])
        self._optimum = None

    @property
    def n_train(self):
        return self.problem.n_data

    @property
    def dim(self):
        return self.problem.n_features

    def make_oracle(self, batch_size, seed):
        return batch_oracle(self.problem, batch_size, seed)

    def init_w(self, seed):
        return np.zeros(self.dim)

    def train_loss(self, w):
        return self.problem.loss(w)

    def test_loss(self, w):
        Phi_te, y_te = self._test
        if y_te.size == 0:
            return float("nan")
        return squared_data_loss(Phi_te, y_te, w)

    def test_accuracy(self, w):
        return float("nan")

    def optimum(self):
        if self._optimum is None:
            w_star = exact_solution(self.problem)
            self._optimum = (w_star, self.problem.loss(w_star))
        return self._optimum


class LogisticBundle:
    kind = "logistic"

    def __init__(self, pc: ProblemConfig):
        if pc.data is not None:
            X, labels = datagen.read_dataset(pc.data)
            if X.shape[1] != pc.input_dim:
                raise ConfigError(
                    f"dataset {pc.data} has {X.shape[1]} features, config says {pc.input_dim}"
                )
        else:
            X, labels = datagen.gen_classification(pc.data_seed, pc.n_samples,
                                                   pc.input_dim, pc.separation)
        tr, te = datagen.train_test_split(X.shape[0], pc.test_fraction, pc.data_seed)
        self.problem = LogisticProblem(X[tr], labels[tr], pc.reg)
        self._test = LogisticProblem(X[te], labels[te], pc.reg) if te.size else None
        self._optimum = None

    @property
    def n_train(self):
        return self.problem.n_data

    @property
    def dim(self):
        return self.problem.n_features

    def make_oracle(self, batch_size, seed):
        return logistic_oracle(self.problem, batch_size, seed)

    def init_w(self, seed):
        return np.zeros(self.dim)

    def train_loss(self, w):
        return self.problem.loss(w)

    def test_loss(self, w):
        if self._test is None:
            return float("nan")
        margins = self._test.labels * (self._test.X @ w)
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def test_accuracy(self, w):
        if self._test is None:
            return float("nan")
        return self._test.accuracy(w)

    def optimum(self):
        if self._optimum is None:
            w_star = damped_newton(self.problem, np.zeros(self.dim))
            self._optimum = (w_star, self.problem.loss(w_star))
        return self._optimum


class MLPBundle:
    kind = "mlp"

    def __init__(self, pc: ProblemConfig):
        if pc.data is not None:
            X, raw_t = datagen.read_dataset(pc.data)
            targets = raw_t.astype(int)
            if X.shape[1] != pc.input_dim:
                raise ConfigError(
                    f"dataset {pc.data} has {X.shape[1]} features, config says {pc.input_dim}"
                )
        else:
            X, targets = datagen.gen_blobs(pc.data_seed, pc.n_samples, pc.input_dim,
                                           pc.n_classes, pc.separation)
        tr, te = datagen.train_test_split(X.shape[0], pc.test_fraction, pc.data_seed)
        self.net = ToyNet((pc.input_dim,) + pc.hidden + (pc.n_classes,),
                          activation="tanh", loss="cross_entropy", reg=pc.reg)
        self._train = (X[tr], targets[tr])
        self._test = (X[te], targets[te])

    @property
    def n_train(self):
        return self._train[0].shape[0]

    @property
    def dim(self):
        return self.net.n_params

    def make_oracle(self, batch_size, seed):
        return MLPOracle(self.net, self._train[0], self._train[1], batch_size, seed)

    def init_w(self, seed):
        return self.net.init_params(seed)

    def train_loss(self, w):
        return self.net.loss_value(w, self._train[0], self._train[1])

    def test_loss(self, w):
        X, t = self._test
        if t.size == 0:
            return float("nan")
        reg = self.net.reg
        # report the data term only on held-out samples
        return self.net.loss_value(w, X, t) - 0.5 * reg * float(w @ w)

    def test_accuracy(self, w):
        X, t = self._test
        if t.size == 0:
            return float("nan")
        return self.net.accuracy(w, X, t)

    def optimum(self):
        return None


def build_problem(pc: ProblemConfig):
    try:
        if pc.kind == "quadratic":
            return QuadraticBundle(pc)
        if pc.kind == "logistic":
            return LogisticBundle(pc)
        if pc.kind == "mlp":
            return MLPBundle(pc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown problem kind {pc.kind!r}")


def damped_newton(problem, w0, tol=1e-10, max_iter=100, callback=None):
    """Full-batch Newton with backtracking, to tight gradient tolerance."""
    w = np.asarray(w0, dtype=float).copy()
    for i in range(max_iter):
        g = problem.gradient(w)
        if np.linalg.norm(g) <= tol:
            break
        d = np.linalg.solve(problem.hessian_at(w), g)
        t, L0, gd = 1.0, problem.loss(w), float(g @ d)
        while t > 1e-10 and problem.loss(w - t * d) > L0 - 1e-4 * t * gd:
            t *= 0.5
        w = w - t * d
        if callback is not None:
            callback(i, w.copy())
    return w


# ---------------------------------------------------------------------------
# optimizer loops

class _Recorder:
    """Emission schedule plus loss evaluation shared by all loops."""

    def __init__(self, bundle, cfg, oracle, total_steps):
        self.bundle = bundle
        self.cfg = cfg
        self.oracle = oracle
        self.total = total_steps
        self.epoch_len = max(1, math.ceil(bundle.n_train / cfg.batch_size))
        self.records = []
        self.t0 = time.perf_counter()

    def due(self, step):
        return (step == 0 or step == self.total
                or step % self.cfg.record_every == 0
                or step % self.epoch_len == 0)

    def emit(self, step, w, step_length, data_read=None):
        """Append a record; returns False when the loss went non-finite."""
        train = self.bundle.train_loss(w) if np.all(np.isfinite(w)) else float("nan")
        wall = (time.perf_counter() - self.t0) * 1e3 if self.cfg.timing else 0.0
        read = self.oracle.data_read if data_read is None else data_read
        if not np.isfinite(train):
            self.records.append(RunRecord(step, read, float("nan"), float("nan"),
                                          float("nan"), step_length, wall))
            return False
        self.records.append(RunRecord(step, read, train,
                                      self.bundle.test_loss(w),
                                      self.bundle.test_accuracy(w),
                                      step_length, wall))
        return True


def run_sgd(bundle, cfg: ExperimentConfig) -> RunResult:
    """Plain fixed-step SGD."""
    steps = cfg.n_steps(bundle.n_train)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    w = bundle.init_w(cfg.seed)
    rec = _Recorder(bundle, cfg, oracle, steps)
    rec.emit(0, w, cfg.lr)
    for t in range(1, steps + 1):
        g = oracle.noisy_gradient(w)
        w = w - cfg.lr * g
        if rec.due(t) and not rec.emit(t, w, cfg.lr):
            log.warning("sgd diverged at step %d", t)
            return RunResult(rec.records, True, w)
    return RunResult(rec.records, False, w)


def construct_preconditioner(oracle, w, settings: SolverSettings, base_lr):
    """Estimation, active probing, rank reduction, assembly; one place.

    Returns ``(preconditioner, lr, posterior, estimates)``.  Raises
    ``EstimationError`` / ``SolveFailure`` / ``ValueError`` on failure;
    callers decide whether to fall back.
    """
    est = estimate_parameters(oracle, w, settings.init_samples, mode="full")
    solver_cfg = SolverConfig(iterations=settings.iterations,
                              init_samples=settings.init_samples,
                              normalize_probes=settings.normalize_probes,
                              mode="full")
    post = run_inference(oracle, w, est, solver_cfg)
    if post.m == 0:
        raise EstimationError("active solver produced no usable observations")
    k = min(settings.rank, post.m)
    spectral = reduce_rank(post, k)
    precond, lr = build(spectral, beta=settings.beta, base_lr=base_lr)
    return precond, lr, post, est


def run_precond_sgd(bundle, cfg: ExperimentConfig) -> RunResult:
    """SGD behind the curvature-adapted pre-conditioner.

    Full mode builds P once up front and applies P^2 to every gradient;
    scalar mode skips the projection and instead refreshes the scalar
    step length at rebuild boundaries (every ``rebuild_every`` epochs,
    with an optional fixed-rate warmup epoch first).  Construction
    failures fall back to plain SGD with a warning.
    """
    steps = cfg.n_steps(bundle.n_train)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    w = bundle.init_w(cfg.seed)
    rec = _Recorder(bundle, cfg, oracle, steps)
    info = {}

    if cfg.solver.mode == "full":
        try:
            precond, lr, post, est = construct_preconditioner(oracle, w, cfg.solver, cfg.lr)
            info.update(alpha2=precond.alpha ** 2, rank=precond.spectral.k,
                        construction_data_read=oracle.data_read,
                        b0=est.b0, w0=est.w0, lam0=est.lam0)
            step_length = lr * precond.alpha ** 2
        except (EstimationError, SolveFailure, ValueError) as exc:
            log.warning("pre-conditioner construction failed (%s); plain SGD fallback", exc)
            precond, lr, step_length = None, cfg.lr, cfg.lr
            info.update(fallback=str(exc))
        rec.emit(0, w, step_length)
        for t in range(1, steps + 1):
            g = oracle.noisy_gradient(w)
            w = w - lr * (apply_p_squared(precond, g) if precond is not None else g)
            if rec.due(t) and not rec.emit(t, w, step_length):
                log.warning("precond_sgd diverged at step %d", t)
                return RunResult(rec.records, True, w, info)
        return RunResult(rec.records, False, w, info)

    # scalar mode
    eta = cfg.lr
    rebuilds = 0
    rec.emit(0, w, eta)
    for t in range(1, steps + 1):
        epoch, offset = divmod(t - 1, rec.epoch_len)
        if offset == 0 and epoch % cfg.rebuild_every == 0 and not (cfg.warmup and epoch == 0):
            eta = _scalar_rebuild(oracle, w, cfg.solver, eta)
            rebuilds += 1
        g = oracle.noisy_gradient(w)
        w = w - eta * g
        if rec.due(t) and not rec.emit(t, w, eta):
            log.warning("precond_sgd (scalar) diverged at step %d", t)
            return RunResult(rec.records, True, w, {"rebuilds": rebuilds})
    return RunResult(rec.records, False, w, {"rebuilds": rebuilds, "eta": eta})


def _scalar_rebuild(oracle, w, settings: SolverSettings, previous_eta, attempts=3):
    for _ in range(attempts):
        try:
            est = estimate_parameters(oracle, w, settings.init_samples, mode="scalar")
        except EstimationError as exc:
            log.warning("scalar estimation attempt failed (%s)", exc)
            continue
        return scalar_step(est, previous=previous_eta).eta
    log.warning("scalar estimation failed %d times; keeping step %g", attempts, previous_eta)
    return previous_eta


def run_baseline(bundle, cfg: ExperimentConfig) -> RunResult:
    if cfg.optimizer == "newton_oracle":
        return _run_newton(bundle, cfg)
    if cfg.optimizer == "avg_inv":
        return _run_avg_inv(bundle, cfg)
    if cfg.optimizer == "cg":
        return _run_cg(bundle, cfg)
    raise ConfigError(f"{cfg.optimizer!r} is not a baseline")


def _run_newton(bundle, cfg):
    t0 = time.perf_counter()
    if bundle.kind == "quadratic":
        w_star, _ = bundle.optimum()
        wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
        recs = [RunRecord(1, bundle.n_train, bundle.train_loss(w_star),
                          bundle.test_loss(w_star), bundle.test_accuracy(w_star),
                          0.0, wall)]
        return RunResult(recs, False, w_star)
    if bundle.kind == "logistic":
        recs = []

        def cb(i, w):
            wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            recs.append(RunRecord(i + 1, (i + 1) * bundle.n_train, bundle.train_loss(w),
                                  bundle.test_loss(w), bundle.test_accuracy(w), 0.0, wall))

        w_star = damped_newton(bundle.problem, bundle.init_w(cfg.seed), callback=cb)
        return RunResult(recs, False, w_star)
    raise ConfigError(f"newton_oracle is not available for {bundle.kind!r} problems")


def _run_avg_inv(bundle, cfg):
    if bundle.kind != "quadratic":
        raise ConfigError("avg_inv baseline only applies to quadratic problems")
    n_batches = cfg.n_steps(bundle.n_train)
    t0 = time.perf_counter()
    recs = []

    def cb(t, w_mean):
        if (t + 1) % cfg.record_every == 0 or t == 0 or t + 1 == n_batches:
            wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            recs.append(RunRecord(t + 1, (t + 1) * cfg.batch_size,
                                  bundle.train_loss(w_mean), bundle.test_loss(w_mean),
                                  bundle.test_accuracy(w_mean), 0.0, wall))

    w = avg_inv_baseline(bundle.problem, cfg.batch_size, n_batches, cfg.seed, callback=cb)
    return RunResult(recs, False, w)


def _run_cg(bundle, cfg):
    if bundle.kind != "quadratic":
        raise ConfigError("cg baseline only applies to quadratic problems")
    iters = cfg.n_steps(bundle.n_train)
    oracle = bundle.make_oracle(cfg.batch_size, cfg.seed)
    problem = bundle.problem
    b = problem.Phi @ problem.y / problem.n_data  # one full pass over the data
    base_read = bundle.n_train
    t0 = time.perf_counter()
    recs = []

    def cb(t, x, res_norm):
        wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
        train = bundle.train_loss(x) if np.all(np.isfinite(x)) else float("nan")
        test = bundle.test_loss(x) if np.isfinite(train) else float("nan")
        acc = bundle.test_accuracy(x) if np.isfinite(train) else float("nan")
        recs.append(RunRecord(t + 1, base_read + oracle.data_read, train, test, acc,
                              0.0, wall))

    w, diverged = cg_baseline(oracle, b, iters, callback=cb)
    return RunResult(recs, diverged, w, {"diverged": diverged})


def run_experiment(bundle, cfg: ExperimentConfig) -> RunResult:
    if cfg.optimizer == "sgd":
        return run_sgd(bundle, cfg)
    if cfg.optimizer == "precond_sgd":
        return run_precond_sgd(bundle, cfg)
    return run_baseline(bundle, cfg)


# ---------------------------------------------------------------------------
# comparisons

@dataclass(frozen=True)
class RunSummary:
    label: str
    final_train_loss: float
    final_test_loss: float
    diverged: bool
    data_read: int
    data_read_to_target: int | None


@dataclass
class ComparisonResult:
    labeled_records: list
    summaries: list
    target_loss: float | None

    def summary_text(self):
        lines = []
        if self.target_loss is not None:
            lines.append(f"target train loss: {self.target_loss:.6g}")
        for s in self.summaries:
            reach = "never" if s.data_read_to_target is None else str(s.data_read_to_target)
            lines.append(
                f"{s.label}: final_train={s.final_train_loss:.6g} "
                f"final_test={s.final_test_loss:.6g} diverged={s.diverged} "
                f"data_read={s.data_read} to_target={reach}"
            )
        return "\n".join(lines) + "\n"


def _run_label(cfg, counts):
    base = cfg.optimizer
    if counts[base] > 1:
        return f"{base}[lr={cfg.lr:g}]"
    return base


def compare(configs) -> ComparisonResult:
    """Run several optimizers on one shared problem and merge the results.

    All configs must agree on the problem block and the seed; the merged
    records are keyed by (optimizer label, data_read).  Divergence of an
    individual run is recorded in its summary, not fatal.
    """
    if not configs:
        raise ConfigError("compare needs at least one run config")
    pkey = asdict(configs[0].problem)
    seed = configs[0].seed
    for cfg in configs[1:]:
        if asdict(cfg.problem) != pkey:
            raise ConfigError("compare requires all runs to share the same problem block")
        if cfg.seed != seed:
            raise ConfigError("compare requires all runs to share the same seed")
    bundle = build_problem(configs[0].problem)

    target = None
    tl = [c.target_loss for c in configs if c.target_loss is not None]
    ts = [c.target_suboptimality for c in configs if c.target_suboptimality is not None]
    if tl:
        target = tl[0]
    elif ts:
        opt = bundle.optimum()
        if opt is None:
            raise ConfigError("target_suboptimality needs a problem with a computable optimum")
        loss_star = opt[1]
        loss_init = bundle.train_loss(bundle.init_w(seed))
        target = loss_star + ts[0] * (loss_init - loss_star)

    counts = {}
    for cfg in configs:
        counts[cfg.optimizer] = counts.get(cfg.optimizer, 0) + 1

    labeled = []
    summaries = []
    for cfg in configs:
        label = _run_label(cfg, counts)
        result = run_experiment(bundle, cfg)
        for r in result.records:
            labeled.append((label, r))
        reach = None
        if target is not None:
            for r in result.records:
                if np.isfinite(r.train_loss) and r.train_loss <= target:
                    reach = r.data_read
                    break
        final = result.final
        summaries.append(RunSummary(label=label, final_train_loss=final.train_loss,
                                    final_test_loss=final.test_loss,
                                    diverged=result.diverged,
                                    data_read=final.data_read,
                                    data_read_to_target=reach))
    return ComparisonResult(labeled, summaries, target)
