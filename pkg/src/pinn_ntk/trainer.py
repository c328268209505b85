"""Training loop with weighted losses and trace-balanced adaptive weights.

The composite loss carries one positive weight per data group. The adaptive
scheme periodically recomputes every weight as (total kernel trace) /
(group block trace), evaluated on a reference batch frozen at iteration 0,
so groups whose kernel blocks would otherwise dominate the dynamics get
down-weighted relative to the starved ones. Only diagonal-block traces are
needed for the update (summed squared gradient-row norms); full kernels are
assembled solely at snapshot iterations.

Everything is deterministic given the two seeds (initialization, sampling):
batches are drawn from a single generator in a fixed group order and all
reductions run in fixed index order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import network, ntk, problems
from .network import ArchSpec, MlpParams
from .numerics import Spectrum
from .problems import Batch, PdeProblem

__all__ = [
    "TrainConfig",
    "WeightState",
    "KernelSnapshot",
    "TrainHistory",
    "loss",
    "loss_gradient",
    "adaptive_weights",
    "initial_trace_weights",
    "step_gd",
    "AdamState",
    "step_adam",
    "train",
    "default_snapshots",
]

log = logging.getLogger(__name__)

OPTIMIZERS = ("gd", "adam")
WEIGHT_SCHEMES = ("fixed", "adaptive")
LAMBDA_FLOOR = 1e-3
LAMBDA_CEILING = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the problem and architecture."""

    learning_rate: float
    iterations: int
    batch_sizes: dict[str, int]
    optimizer: str = "gd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_scheme: str = "fixed"
    fixed_weights: dict[str, float] | None = None
    update_every: int = 1
    batch_strategy: str = "fixed_uniform_grid"
    resample_every: int = 0  # 0 keeps the initial batch for the whole run
    loss_normalized: bool = True  # divide each group term by its batch size
    log_every: int = 100
    snapshot_iterations: tuple[int, ...] | None = None
    track_l2_error: bool = True
    seed_init: int = 0
    seed_sample: int = 0
    lambda_floor: float = LAMBDA_FLOOR
    lambda_ceiling: float = LAMBDA_CEILING
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.update_every < 1:
            raise ValueError("update_every must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.weight_scheme!r}")


@dataclass(frozen=True)
class WeightState:
    """One positive finite weight per data group."""

    values: dict[str, float]

    def __post_init__(self):
        for name, lam in self.values.items():
            if not np.isfinite(lam) or lam <= 0:
                raise ValueError(f"weight {name!r} must be positive and finite")

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class KernelSnapshot:
    iteration: int
    kernel: ntk.NtkMatrix
    kernel_drift: float
    full_spectrum: Spectrum
    block_spectra: dict[str, Spectrum]


@dataclass
class TrainHistory:
    """Per-logged-iteration series plus kernel snapshots."""

    group_names: tuple[str, ...]
    iterations: list[int] = field(default_factory=list)
    losses: dict[str, list[float]] = field(default_factory=dict)
    total_loss: list[float] = field(default_factory=list)
    weights: dict[str, list[float]] = field(default_factory=dict)
    rel_l2: list[float] = field(default_factory=list)
    param_drift: list[float] = field(default_factory=list)
    snapshots: list[KernelSnapshot] = field(default_factory=list)
    diverged: bool = False

    def __post_init__(self):
        for g in self.group_names:
            self.losses.setdefault(g, [])
            self.weights.setdefault(g, [])

    def record(self, iteration, losses, total, weights, rel_l2, drift):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("iteration indices must increase strictly")
        self.iterations.append(iteration)
        for g in self.group_names:
            self.losses[g].append(losses[g])
            self.weights[g].append(weights[g])
        self.total_loss.append(total)
        self.rel_l2.append(rel_l2)
        self.param_drift.append(drift)

    def final_rel_l2(self) -> float:
        return self.rel_l2[-1]

    def drift_rows(self):
        """(iteration, param_drift, kernel_drift) rows at snapshot iterations."""
        by_iter = dict(zip(self.iterations, self.param_drift))
        return [
            (s.iteration, by_iter.get(s.iteration, float("nan")), s.kernel_drift)
            for s in self.snapshots
        ]


def _normalizers(batch: Batch, normalized: bool) -> dict[str, float]:
    return {
        name: float(gb.points.shape[0]) if normalized else 1.0
        for name, gb in batch.groups.items()
    }


def group_errors(params: MlpParams, problem: PdeProblem, batch: Batch) -> dict[str, np.ndarray]:
    """Per-group mismatch vectors (L_g u)(x_i) - target_i."""
    out = {}
    for g in problem.groups:
        gb = batch.groups[g.name]
        out[g.name] = (
            network.operator_values(params, gb.points, g.operator.terms) - gb.targets
        )
    return out


def loss(
    params: MlpParams,
    problem: PdeProblem,
    batch: Batch,
    weights: WeightState,
    normalized: bool = True,
) -> tuple[dict[str, float], float]:
    """Per-group weighted half-square losses and their sum."""
    norms = _normalizers(batch, normalized)
    errors = group_errors(params, problem, batch)
    per_group = {
        name: 0.5 * weights[name] / norms[name] * float(e @ e)
        for name, e in errors.items()
    }
    return per_group, sum(per_group.values())


def loss_gradient(
    params: MlpParams,
    problem: PdeProblem,
    batch: Batch,
    weights: WeightState,
    normalized: bool = True,
) -> np.ndarray:
    """Exact flat gradient of the weighted composite loss."""
    norms = _normalizers(batch, normalized)
    grad = np.zeros(params.num_params)
    for g in problem.groups:
        gb = batch.groups[g.name]
        e = network.operator_values(params, gb.points, g.operator.terms) - gb.targets
        grad += network.gradient_accumulate(
            params, gb.points, g.operator.terms, (weights[g.name] / norms[g.name]) * e
        )
    return grad


def adaptive_weights(
    traces: dict[str, float] | ntk.NtkMatrix,
    floor: float = LAMBDA_FLOOR,
    ceiling: float = LAMBDA_CEILING,
) -> WeightState:
    """Trace-balanced weights: each group gets (sum of traces) / (own trace).

    Accepts either an assembled kernel or a plain dict of diagonal-block
    traces. Degenerate blocks (trace below 1e-12 of the total) are clamped
    to the configured bounds with a warning instead of producing infinities.
    """
    if isinstance(traces, ntk.NtkMatrix):
        traces = traces.diagonal_traces()
    total = sum(traces.values())
    if total <= 0:
        raise ValueError("kernel traces must be positive")
    values = {}
    for name, tr in traces.items():
        if tr < 1e-12 * total:
            log.warning("degenerate kernel block %r (trace %.3e); clamping", name, tr)
            values[name] = ceiling
            continue
        values[name] = float(np.clip(total / tr, floor, ceiling))
    return WeightState(values)


def initial_trace_weights(
    params: MlpParams, problem: PdeProblem, batch: Batch
) -> WeightState:
    """Frozen two-term reduction of the adaptive rule at initialization.

    Every non-residual group is weighted by (residual trace / own trace)
    and the residual keeps weight one, the form the adaptive update takes
    when the residual block dominates the total trace.
    """
    traces = ntk.diagonal_block_traces(params, problem, batch)
    res = traces[problems.RESIDUAL]
    values = {}
    for name, tr in traces.items():
        if name == problems.RESIDUAL:
            values[name] = 1.0
        else:
            values[name] = float(np.clip(res / tr, LAMBDA_FLOOR, LAMBDA_CEILING))
    return WeightState(values)


def step_gd(params: MlpParams, gradient: np.ndarray, learning_rate: float) -> MlpParams:
    """One plain gradient-descent step on the flat parameter vector."""
    if gradient.shape != (params.num_params,):
        raise ValueError("gradient length mismatch")
    return params.with_flat(params.flat - learning_rate * gradient)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(n: int) -> "AdamState":
        return AdamState(np.zeros(n), np.zeros(n), 0)


def step_adam(
    params: MlpParams,
    gradient: np.ndarray,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MlpParams, AdamState]:
    """One Adam step with bias correction."""
    if gradient.shape != (params.num_params,):
        raise ValueError("gradient length mismatch")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * gradient
    v = beta2 * state.v + (1.0 - beta2) * gradient * gradient
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    flat = params.flat - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return params.with_flat(flat), AdamState(m, v, t)


def default_snapshots(iterations: int) -> tuple[int, ...]:
    """Log-spaced snapshot cadence: 0, 10, 100, ... plus the final iteration."""
    marks = {0, iterations}
    k = 10
    while k < iterations:
        marks.add(k)
        k *= 10
    return tuple(sorted(marks))


def _resolve_weights(config: TrainConfig, names: tuple[str, ...]) -> WeightState:
    if config.fixed_weights is not None:
        missing = set(names) - set(config.fixed_weights)
        if missing:
            raise ValueError(f"fixed weights missing groups {sorted(missing)}")
        return WeightState({g: float(config.fixed_weights[g]) for g in names})
    return WeightState({g: 1.0 for g in names})


def train(
    problem: PdeProblem, arch: ArchSpec, config: TrainConfig
) -> tuple[TrainHistory, MlpParams]:
    """Run the full training loop and record its history.

    The reference batch for kernel snapshots and adaptive traces is the
    first draw from the sampling stream; with resampling disabled it is
    also the training batch. Aborts (with the history collected so far and
    ``diverged`` set) if the loss exceeds the divergence threshold or any
    gradient turns non-finite.
    """
    params = network.init_params(arch, config.seed_init)
    rng = np.random.default_rng(config.seed_sample)
    ref_batch = problems.sample_batch(
        problem, config.batch_sizes, config.batch_strategy, seed=rng
    )
    batch = ref_batch
    weights = _resolve_weights(config, problem.group_names)
    snapshots = (
        set(config.snapshot_iterations)
        if config.snapshot_iterations is not None
        else set(default_snapshots(config.iterations))
    )
    history = TrainHistory(problem.group_names)
    theta0 = params
    adam = AdamState.zeros(params.num_params) if config.optimizer == "adam" else None
    kernel0: ntk.NtkMatrix | None = None

    def take_snapshot(iteration: int, current: MlpParams):
        nonlocal kernel0
        kernel = ntk.assemble(current, problem, ref_batch).without_jacobians()
        drift = 0.0 if kernel0 is None else ntk.relative_change(kernel, kernel0)
        if kernel0 is None:
            kernel0 = kernel
        full, blocks = ntk.block_spectra(kernel)
        history.snapshots.append(
            KernelSnapshot(iteration, kernel, drift, full, blocks)
        )

    def record(iteration: int, current: MlpParams):
        per_group, total = loss(current, problem, batch, weights, config.loss_normalized)
        err = (
            problems.relative_l2_error(current, problem)
            if (config.track_l2_error and problem.exact is not None)
            else float("nan")
        )
        drift = ntk.param_relative_change(current, theta0) if iteration else 0.0
        history.record(
            iteration, per_group, total, weights.values, err, drift
        )
        return total

    for n in range(config.iterations):
        if config.resample_every and n > 0 and n % config.resample_every == 0:
            batch = problems.sample_batch(
                problem, config.batch_sizes, config.batch_strategy, seed=rng
            )
        if config.weight_scheme == "adaptive" and n % config.update_every == 0:
            traces = ntk.diagonal_block_traces(params, problem, ref_batch)
            weights = adaptive_weights(
                traces, config.lambda_floor, config.lambda_ceiling
            )
        if n in snapshots:
            take_snapshot(n, params)
        if n % config.log_every == 0:
            total = record(n, params)
            if not np.isfinite(total) or total > config.divergence_threshold:
                history.diverged = True
                log.error("training diverged at iteration %d (loss %.3e)", n, total)
                return history, params
        grad = loss_gradient(params, problem, batch, weights, config.loss_normalized)
        if not np.all(np.isfinite(grad)):
            history.diverged = True
            log.error("non-finite gradient at iteration %d; aborting", n)
            return history, params
        if config.optimizer == "gd":
            params = step_gd(params, grad, config.learning_rate)
        else:
            params, adam = step_adam(
                params,
                grad,
                adam,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            )
    if config.iterations in snapshots:
        take_snapshot(config.iterations, params)
    record(config.iterations, params)
    return history, params
