"""Adversarial training at desk scale: attacks, problems, trainers, metrics.

The reweighted pipeline turns each training example into one problem
instance whose inner objective is the (log-barrier penalized) attack loss
and whose composed value is exp(loss / r); running the compositional driver
on that problem trains the classifier while implicitly maintaining the
worst-case instance weights.  A plain uniform-weight adversarial trainer is
included as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..barrier import barrier_curvature_diag
from ..driver import RunMetrics, SolverConfig, SolverState, constant_schedule, run, staged_schedule
from ..hypergrad import HypergradConfig
from ..problem import (
    BoxConstraint,
    CboProblem,
    Dims,
    ProblemInstance,
    ScalarCell,
    build_box_constraints,
    log_outer,
)
from .classifiers import ReluMlp, SoftmaxRegression
from .datasets import SyntheticDataset

FEATURE_CLIP = 1e-3   # keeps every box side strictly positive
ATTACK_LOSSES = ("negative-ce", "margin")


def pgd_attack(model, x: np.ndarray, y, epsilon: float, steps: int,
               step_size: float, theta: np.ndarray | None = None) -> np.ndarray:
    """Sign-gradient ascent on the training loss inside the epsilon box
    intersected with [0,1]^p; accepts a single example or a batch.
    """
    if theta is None:
        theta = model.theta
    single = x.ndim == 1
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_1d(np.asarray(y, dtype=int))
    lo = np.maximum(X - epsilon, 0.0)
    hi = np.minimum(X + epsilon, 1.0)
    adv = X.copy()
    for _ in range(steps):
        grad = model.loss_grad_input_batch(theta, adv, Y)
        adv = np.clip(adv + step_size * np.sign(grad), lo, hi)
    return adv[0] if single else adv


def _attack_oracles(model, attack_loss: str):
    if attack_loss == "negative-ce":
        return (
            lambda th, xt, y: -model.loss(th, xt, y),
            lambda th, xt, y: -model.loss_grad_input(th, xt, y),
            lambda th, xt, y, v: -model.loss_hess_input_vec(th, xt, y, v),
            lambda th, xt, y, v: -model.loss_cross_vec(th, xt, y, v),
        )
    if attack_loss == "margin":
        return (
            model.margin,
            model.margin_grad_input,
            lambda th, xt, y, v: np.zeros_like(xt),
            model.margin_cross_vec,
        )
    raise ValueError(f"attack_loss must be one of {ATTACK_LOSSES}")


def _instance_for_example(index: int, model, x: np.ndarray, y: int,
                          constraint: BoxConstraint, r_cell: ScalarCell,
                          attack_loss: str, mu: float, L: float) -> ProblemInstance:
    h_val, h_grad, h_hess, h_cross = _attack_oracles(model, attack_loss)

    def loss_value(theta, delta):
        return model.loss(theta, x + delta, y)

    def loss_grad_theta(theta, delta):
        return model.loss_grad_theta(theta, x + delta, y)

    def loss_grad_delta(theta, delta):
        return model.loss_grad_input(theta, x + delta, y)

    def g_value(theta, delta):
        return np.array([np.exp(loss_value(theta, delta) / r_cell.value)])

    def g_grad_theta(theta, delta):
        g = np.exp(loss_value(theta, delta) / r_cell.value)
        return (g / r_cell.value) * loss_grad_theta(theta, delta)[None, :]

    def g_grad_delta(theta, delta):
        g = np.exp(loss_value(theta, delta) / r_cell.value)
        return (g / r_cell.value) * loss_grad_delta(theta, delta)[None, :]

    return ProblemInstance(
        index=index,
        g_value=g_value,
        g_grad_theta=g_grad_theta,
        g_grad_delta=g_grad_delta,
        h_value=lambda th, de: h_val(th, x + de, y),
        h_grad_delta=lambda th, de: h_grad(th, x + de, y),
        h_hess_delta_vec=lambda th, de, v: h_hess(th, x + de, y, v),
        h_cross_jac_vec=lambda th, de, v: h_cross(th, x + de, y, v),
        constraint=constraint,
        strong_convexity_mu=mu,
        smoothness_L=L,
        loss_value=loss_value,
        loss_grad_theta=loss_grad_theta,
        loss_grad_delta=loss_grad_delta,
    )


def build_adversarial_problem(dataset: SyntheticDataset, model, epsilon: float,
                              c: float, r: float,
                              attack_loss: str = "negative-ce") -> CboProblem:
    """One instance per training example; the reweighting strength lives in
    problem.reweight_r so a schedule can drive it during a run.

    Features are clipped away from 0/1 before box construction so every side
    has positive width.  The declared (mu, L) per instance are heuristic
    scale estimates from the barrier curvature at the box center: the attack
    loss itself is not convex, the barrier supplies the curvature.
    """
    r_cell = ScalarCell(r)
    instances = []
    d = model.dim
    for i in range(len(dataset)):
        x = np.clip(dataset.features[i], FEATURE_CLIP, 1.0 - FEATURE_CLIP)
        constraint = build_box_constraints(x, epsilon)
        diag = barrier_curvature_diag(constraint, c, constraint.interior_point) if c > 0 else None
        if diag is not None:
            mu = 0.5 * float(np.min(diag))
            L = 4.0 * float(np.max(diag)) + 1.0
        else:
            mu, L = 1e-6, 1.0
        instances.append(_instance_for_example(
            i, model, x, int(dataset.labels[i]), constraint, r_cell,
            attack_loss, mu, L))
    outer = log_outer(r_cell, domain_floor=1.0)
    return CboProblem(
        instances=tuple(instances),
        outer=outer,
        dims=Dims(d=d, p=dataset.features.shape[1], m=1, M=len(dataset)),
        reweight_r=r_cell,
    )


@dataclass(frozen=True)
class RobustnessReport:
    clean_accuracy: float
    robust_accuracy: float
    per_class_clean: np.ndarray
    per_class_robust: np.ndarray
    tail_fraction: float
    tail_robust_accuracy: float

    def as_dict(self) -> dict:
        return {
            "sa": self.clean_accuracy,
            "ra_pgd": self.robust_accuracy,
            "per_class_sa": [float(v) for v in self.per_class_clean],
            "per_class_ra": [float(v) for v in self.per_class_robust],
            "ra_tail_fraction": self.tail_fraction,
            "ra_tail": self.tail_robust_accuracy,
        }


def tail_mean(per_class: Sequence[float], fraction: float) -> float:
    """Mean over the ceil(fraction * C) classes with the lowest values."""
    values = np.sort(np.asarray(per_class, dtype=float))
    k = int(np.ceil(fraction * values.size))
    return float(values[:k].mean())


def evaluate_robustness(model, dataset: SyntheticDataset, epsilon: float,
                        pgd_steps: int, step_size: float | None = None,
                        theta: np.ndarray | None = None,
                        tail_fraction: float = 0.3) -> RobustnessReport:
    """Clean and PGD-attacked accuracy, per class and aggregated."""
    if theta is None:
        theta = model.theta
    if step_size is None:
        step_size = 2.5 * epsilon / max(pgd_steps, 1)
    X, Y = dataset.features, dataset.labels
    clean_pred = model.predict(theta, X)
    adv = pgd_attack(model, X, Y, epsilon, pgd_steps, step_size, theta=theta)
    adv_pred = model.predict(theta, adv)
    C = dataset.n_classes
    per_clean = np.zeros(C)
    per_robust = np.zeros(C)
    for cls in range(C):
        idx = Y == cls
        if not np.any(idx):
            per_clean[cls] = np.nan
            per_robust[cls] = np.nan
            continue
        per_clean[cls] = 100.0 * np.mean(clean_pred[idx] == cls)
        per_robust[cls] = 100.0 * np.mean(adv_pred[idx] == cls)
    valid = ~np.isnan(per_robust)
    return RobustnessReport(
        clean_accuracy=100.0 * float(np.mean(clean_pred == Y)),
        robust_accuracy=100.0 * float(np.mean(adv_pred == Y)),
        per_class_clean=per_clean,
        per_class_robust=per_robust,
        tail_fraction=tail_fraction,
        tail_robust_accuracy=tail_mean(per_robust[valid], tail_fraction),
    )


def train_uniform_at(model, theta0: np.ndarray, dataset: SyntheticDataset,
                     epsilon: float, steps: int, lr: float, batch_size: int,
                     attack_steps: int, attack_step_size: float,
                     seed: int) -> np.ndarray:
    """Plain uniform-weight adversarial training: PGD attack then SGD step."""
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta0, dtype=float).copy()
    N = len(dataset)
    batch_size = min(batch_size, N)
    for _ in range(steps):
        idx = rng.choice(N, size=batch_size, replace=False)
        X = dataset.features[idx]
        Y = dataset.labels[idx]
        adv = pgd_attack(model, X, Y, epsilon, attack_steps, attack_step_size, theta=theta)
        _, grad = model.mean_loss_and_grad_theta(theta, adv, Y)
        theta = theta - lr * grad
    model.theta = theta
    return theta


def train_reweighted(model, theta0: np.ndarray, dataset: SyntheticDataset,
                     epsilon: float, steps: int, lr: float, batch_size: int,
                     inner_steps: int, inner_alpha: float, seed: int,
                     c: float = 1e-3,
                     r_stages: Sequence[float] = (10.0, 1.0, 0.1),
                     r_fractions: Sequence[float] = (0.0, 2.0 / 3.0, 5.0 / 6.0),
                     eta: float = 0.5,
                     inner_method: str = "gd",
                     attack_loss: str = "negative-ce",
                     neglect_inner_hessian: bool = True,
                     ) -> tuple[np.ndarray, SolverState, RunMetrics]:
    """Train via the compositional driver on the reweighted attack problem."""
    problem = build_adversarial_problem(dataset, model, epsilon, c, r_stages[0],
                                        attack_loss=attack_loss)
    config = SolverConfig(
        T=steps,
        K=inner_steps,
        batch_size=min(batch_size, len(dataset)),
        alpha=inner_alpha,
        beta_schedule=constant_schedule(lr),
        eta_schedule=constant_schedule(eta),
        r_schedule=staged_schedule(steps, list(r_stages), list(r_fractions)),
        c=c,
        seed=seed,
        warm_start=True,
        inner_method=inner_method,
        barrier_mode=True,
        hypergrad=HypergradConfig(
            linear_solver="exact-diagonal" if neglect_inner_hessian else "conjugate-gradient",
            neglect_inner_hessian=neglect_inner_hessian,
            barrier_c=c,
        ),
    )
    state, metrics = run(problem, config, theta0)
    model.theta = state.theta
    return state.theta, state, metrics
