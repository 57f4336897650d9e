"""Stochastic driver for the compositional bilevel problem.

Each outer step draws a minibatch, runs K safeguarded inner descent steps per
sampled instance from its warm start, assembles implicit hypergradients, and
then performs the paired update: a running average u tracks the composed
value so that grad f is evaluated at a full-batch-like estimate (plugging the
minibatch value straight into grad f would be biased unless f is linear), and
theta moves along the averaged hypergradient contracted with grad f(u).
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .barrier import BarrierObjective, InnerSolveReport, RawInnerObjective, inner_solve
from .errors import CboError, ConfigError, NumericError
from .hypergrad import HypergradConfig, instance_hypergrad
from .problem import CboProblem, ProblemInstance

INNER_METHODS = ("gd", "sign", "adam")


def constant_schedule(value: float) -> Callable[[int], float]:
    def schedule(t: int) -> float:
        return value
    return schedule


def invsqrt_schedule(T: int, scale: float = 1.0) -> Callable[[int], float]:
    """beta_t = scale / sqrt(T), the stepsize the convergence analysis uses."""
    value = scale / np.sqrt(max(T, 1))
    return constant_schedule(float(value))


def staged_schedule(T: int, values: Sequence[float],
                    fractions: Sequence[float]) -> Callable[[int], float]:
    """Piecewise-constant schedule: values[j] applies from fractions[j] * T on."""
    if len(values) != len(fractions):
        raise ConfigError("schedule values and fractions must have equal length")
    if not fractions or fractions[0] != 0.0:
        raise ConfigError("schedule fractions must start at 0")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ConfigError("schedule fractions must be strictly increasing")
    breaks = [int(np.floor(f * T)) for f in fractions]

    def schedule(t: int) -> float:
        current = values[0]
        for start, value in zip(breaks, values):
            if t >= start:
                current = value
        return current
    return schedule


@dataclass
class SolverConfig:
    """Everything the outer loop needs; schedules are plain callables of t."""

    T: int
    K: int
    batch_size: int
    alpha: float | None = None          # None: per-instance 2 / (L + mu)
    beta_schedule: Callable[[int], float] | None = None   # None: 1 / sqrt(T)
    eta_schedule: Callable[[int], float] = field(default_factory=lambda: constant_schedule(0.5))
    r_schedule: Callable[[int], float] | None = None
    c: float = 1e-3
    seed: int = 0
    warm_start: bool = True
    inner_method: str = "gd"
    barrier_mode: bool = True
    hypergrad: HypergradConfig | None = None

    def resolved_beta(self) -> Callable[[int], float]:
        return self.beta_schedule if self.beta_schedule is not None else invsqrt_schedule(self.T)

    def resolved_hypergrad(self) -> HypergradConfig:
        base = self.hypergrad if self.hypergrad is not None else HypergradConfig()
        want_c = self.c if self.barrier_mode else None
        if base.barrier_c != want_c:
            base = HypergradConfig(
                linear_solver=base.linear_solver,
                cg_tol=base.cg_tol,
                cg_max_iters=base.cg_max_iters,
                neglect_inner_hessian=base.neglect_inner_hessian,
                barrier_c=want_c,
            )
        return base

    def validate(self, M: int):
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.K < 0:
            raise ConfigError("K must be >= 0")
        if not 1 <= self.batch_size <= M:
            raise ConfigError(f"batch_size must be in [1, {M}], got {self.batch_size}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if self.inner_method not in INNER_METHODS:
            raise ConfigError(f"inner_method must be one of {INNER_METHODS}")
        if not self.c >= 0:
            raise ConfigError("barrier coefficient c must be >= 0")
        beta = self.resolved_beta()
        for t in range(min(self.T, 4096)):
            b = beta(t)
            e = self.eta_schedule(t)
            if not b > 0:
                raise ConfigError(f"beta schedule must be positive, got {b} at t={t}")
            if not 0.0 < e <= 1.0:
                raise ConfigError(f"eta schedule must lie in (0, 1], got {e} at t={t}")
            if self.r_schedule is not None and not self.r_schedule(t) > 0:
                raise ConfigError(f"r schedule must be positive at t={t}")
        self.resolved_hypergrad()


@dataclass
class SolverState:
    """Iterate bundle owned by the driver; updated in place by step()."""

    theta: np.ndarray
    u: np.ndarray
    step: int
    per_instance_delta: list[np.ndarray]
    rng: np.random.Generator
    clamp_activations: int = 0


@dataclass(frozen=True)
class StepRecord:
    step: int
    objective: float
    grad_norm: float
    tracking_error: float
    inner_grad_norm: float
    wall_ms: float
    true_grad_sq: float | None = None


@dataclass
class RunMetrics:
    records: list[StepRecord] = field(default_factory=list)

    def append(self, record: StepRecord):
        if not all(np.isfinite([record.objective, record.grad_norm,
                                record.tracking_error, record.inner_grad_norm])):
            raise NumericError(f"non-finite metrics at step {record.step}")
        self.records.append(record)


def _inner_objective(inst: ProblemInstance, config: SolverConfig):
    if config.barrier_mode:
        return BarrierObjective.from_instance(inst, config.c)
    return RawInnerObjective.from_instance(inst)


def _alpha_for(inst: ProblemInstance, config: SolverConfig) -> float:
    if config.alpha is not None:
        return config.alpha
    return 2.0 / (inst.smoothness_L + inst.strong_convexity_mu)


def _solve_batch(problem: CboProblem, state: SolverState, config: SolverConfig,
                 batch: np.ndarray) -> list[InnerSolveReport]:
    reports = []
    for i in batch:
        inst = problem.instances[int(i)]
        delta0 = (state.per_instance_delta[int(i)] if config.warm_start
                  else inst.constraint.interior_point.copy())
        rep = inner_solve(_inner_objective(inst, config), state.theta, delta0,
                          _alpha_for(inst, config), config.K, config.inner_method)
        reports.append(rep)
    return reports


def _clamped(u: np.ndarray, floor: float) -> tuple[np.ndarray, bool]:
    if np.all(u >= floor):
        return u, False
    return np.maximum(u, floor), True


def init_state(problem: CboProblem, config: SolverConfig,
               theta0: np.ndarray) -> SolverState:
    """Seeded state with a bootstrap estimate of the composed value.

    u starts from the batch mean of g at theta0 rather than an arbitrary
    vector, which removes a large initial tracking transient.
    """
    config.validate(problem.dims.M)
    state = SolverState(
        theta=np.asarray(theta0, dtype=float).copy(),
        u=np.zeros(problem.dims.m),
        step=0,
        per_instance_delta=[inst.constraint.interior_point.copy()
                            for inst in problem.instances],
        rng=np.random.default_rng(config.seed),
    )
    if config.r_schedule is not None and problem.reweight_r is not None:
        problem.reweight_r.value = config.r_schedule(0)
    batch = state.rng.choice(problem.dims.M, size=config.batch_size, replace=False)
    reports = _solve_batch(problem, state, config, batch)
    g_sum = np.zeros(problem.dims.m)
    for i, rep in zip(batch, reports):
        inst = problem.instances[int(i)]
        g_sum = g_sum + np.asarray(inst.g_value(state.theta, rep.delta_K), dtype=float)
        if config.warm_start:
            state.per_instance_delta[int(i)] = rep.delta_K.copy()
    u0, clamped = _clamped(g_sum / len(batch), problem.outer.domain_floor)
    state.u = u0
    state.clamp_activations += int(clamped)
    return state


def step(problem: CboProblem, state: SolverState,
         config: SolverConfig) -> tuple[SolverState, StepRecord]:
    """One outer iteration; returns the (mutated) state and its record."""
    t_start = time.perf_counter()
    t = state.step
    if config.r_schedule is not None and problem.reweight_r is not None:
        problem.reweight_r.value = config.r_schedule(t)
    hcfg = config.resolved_hypergrad()

    batch = state.rng.choice(problem.dims.M, size=config.batch_size, replace=False)
    reports = _solve_batch(problem, state, config, batch)

    g_sum = np.zeros(problem.dims.m)
    jac_sum = np.zeros((problem.dims.m, problem.dims.d))
    inner_norms = 0.0
    for i, rep in zip(batch, reports):
        inst = problem.instances[int(i)]
        g_sum = g_sum + np.asarray(inst.g_value(state.theta, rep.delta_K), dtype=float)
        jac_sum = jac_sum + instance_hypergrad(inst, state.theta, rep.delta_K, hcfg)
        inner_norms += rep.final_grad_norm
        if config.warm_start:
            state.per_instance_delta[int(i)] = rep.delta_K.copy()
    g_batch = g_sum / len(batch)
    jac_batch = jac_sum / len(batch)

    eta = config.eta_schedule(t)
    beta = config.resolved_beta()(t)
    u_next = (1.0 - eta) * state.u + eta * g_batch
    u_next, clamped = _clamped(u_next, problem.outer.domain_floor)
    direction = jac_batch.T @ problem.outer.gradient(u_next)
    theta_next = state.theta - beta * direction

    state.theta = theta_next
    state.u = u_next
    state.step = t + 1
    state.clamp_activations += int(clamped)

    record = StepRecord(
        step=t,
        objective=float(problem.outer.evaluate(u_next)),
        grad_norm=float(np.linalg.norm(direction)),
        tracking_error=float(np.linalg.norm(u_next - g_batch)),
        inner_grad_norm=inner_norms / len(batch),
        wall_ms=(time.perf_counter() - t_start) * 1e3,
    )
    return state, record


def run(problem: CboProblem, config: SolverConfig, theta0: np.ndarray,
        true_grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
        ) -> tuple[SolverState, RunMetrics]:
    """T outer steps from theta0; deterministic given config.seed.

    true_grad_fn, when provided (synthetic studies), is evaluated at each
    pre-update iterate and its squared norm stored on the record.
    """
    state = init_state(problem, config, theta0)
    metrics = RunMetrics()
    for t in range(config.T):
        try:
            true_sq = None
            if true_grad_fn is not None:
                tg = true_grad_fn(state.theta)
                true_sq = float(tg @ tg)
            state, record = step(problem, state, config)
            if true_sq is not None:
                record = dataclasses.replace(record, true_grad_sq=true_sq)
            metrics.append(record)
        except CboError as exc:
            raise type(exc)(f"outer step {t} failed: {exc}") from exc
    return state, metrics
