"""Implicit hypergradients through approximate inner minimizers.

Differentiating the composed value g_i(theta, delta_i*(theta)) via the
implicit function theorem needs one linear solve per output coordinate:
(inner Hessian [+ barrier curvature]) v = grad_delta g_i, followed by the
mixed-partial product.  The system matrix is never materialized; conjugate
gradients consumes Hessian-vector products, and a diagonal solve covers the
Hessian-free mode where only the barrier curvature remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .barrier import InnerSolveReport, barrier_curvature_diag
from .dro import DroParams, optimal_weights
from .errors import BoundaryViolationError, ConfigError, SolverFailureError
from .problem import CboProblem, ProblemInstance

LINEAR_SOLVERS = ("exact-diagonal", "conjugate-gradient")


@dataclass(frozen=True)
class HypergradConfig:
    """How to solve the implicit linear system.

    barrier_c is the barrier coefficient used to add the curvature diagonal;
    None means the inner loop ran on the raw objective and no curvature is
    added.  neglect_inner_hessian drops the inner Hessian entirely (the
    piecewise-linear-network approximation), leaving the diagonal system that
    exact-diagonal inverts in closed form.
    """

    linear_solver: str = "conjugate-gradient"
    cg_tol: float = 1e-10
    cg_max_iters: int = 500
    neglect_inner_hessian: bool = False
    barrier_c: float | None = None

    def __post_init__(self):
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ConfigError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if not self.cg_tol > 0.0:
            raise ConfigError("cg_tol must be > 0")
        if self.cg_max_iters < 1:
            raise ConfigError("cg_max_iters must be >= 1")
        if self.neglect_inner_hessian and self.barrier_c is None:
            raise ConfigError(
                "neglect_inner_hessian without a barrier leaves an all-zero system matrix")
        if self.linear_solver == "exact-diagonal" and not self.neglect_inner_hessian:
            raise ConfigError(
                "exact-diagonal requires neglect_inner_hessian (the system is "
                "only diagonal once the inner Hessian is dropped)")


def conjugate_gradient(apply_op: Callable[[np.ndarray], np.ndarray],
                       rhs: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    """CG for a positive-definite operator given only matrix-vector products.

    Stops when |op(v) - rhs| <= tol * |rhs|; raises on negative curvature
    (non-PD operator) or when the iteration budget runs out.
    """
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    v = np.zeros_like(rhs)
    resid = rhs.copy()
    direction = rhs.copy()
    rs = float(resid @ resid)
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * rhs_norm:
            return v
        op_d = apply_op(direction)
        curvature = float(direction @ op_d)
        if curvature <= 0.0:
            raise SolverFailureError(
                "negative curvature encountered: system matrix is not positive definite",
                residual=float(np.sqrt(rs)))
        gamma = rs / curvature
        v = v + gamma * direction
        resid = resid - gamma * op_d
        rs_next = float(resid @ resid)
        direction = resid + (rs_next / rs) * direction
        rs = rs_next
    if np.sqrt(rs) <= tol * rhs_norm:
        return v
    raise SolverFailureError(
        f"conjugate gradient did not converge in {max_iters} iterations",
        residual=float(np.sqrt(rs)))


def _system_solver(inst: ProblemInstance, theta: np.ndarray, delta_hat: np.ndarray,
                   cfg: HypergradConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Returns rhs -> v solving (H [+ C]) v = rhs for this instance."""
    curvature_diag = None
    if cfg.barrier_c is not None:
        margins = inst.constraint.margins(delta_hat)
        if float(np.min(margins)) <= 0.0:
            raise BoundaryViolationError(
                "inner solution sits on the boundary; the implicit gradient "
                "is only defined strictly inside the box")
        curvature_diag = barrier_curvature_diag(inst.constraint, cfg.barrier_c, delta_hat)

    if cfg.neglect_inner_hessian:
        if cfg.linear_solver == "exact-diagonal":
            return lambda rhs: rhs / curvature_diag

        def apply_diag(vec):
            return curvature_diag * vec
        return lambda rhs: conjugate_gradient(apply_diag, rhs, cfg.cg_tol, cfg.cg_max_iters)

    def apply_full(vec):
        out = inst.h_hess_delta_vec(theta, delta_hat, vec)
        if curvature_diag is not None:
            out = out + curvature_diag * vec
        return out
    return lambda rhs: conjugate_gradient(apply_full, rhs, cfg.cg_tol, cfg.cg_max_iters)


def instance_hypergrad(inst: ProblemInstance, theta: np.ndarray,
                       delta_hat: np.ndarray, cfg: HypergradConfig) -> np.ndarray:
    """d g_i(theta, delta_i*(theta)) / d theta, one row per output of g_i.

    Row j is grad_theta g_i[j] - (mixed partial of h_i) v_j* where v_j*
    solves the implicit system with right-hand side grad_delta g_i[j].
    """
    solve = _system_solver(inst, theta, delta_hat, cfg)
    grad_theta = np.atleast_2d(np.asarray(inst.g_grad_theta(theta, delta_hat), dtype=float))
    grad_delta = np.atleast_2d(np.asarray(inst.g_grad_delta(theta, delta_hat), dtype=float))
    rows = []
    for j in range(grad_theta.shape[0]):
        v = solve(grad_delta[j])
        rows.append(grad_theta[j] - inst.h_cross_jac_vec(theta, delta_hat, v))
    return np.vstack(rows)


def _loss_hypergrad(inst: ProblemInstance, theta: np.ndarray,
                    delta_hat: np.ndarray, cfg: HypergradConfig) -> np.ndarray:
    """Total derivative of the raw loss along the same implicit path."""
    solve = _system_solver(inst, theta, delta_hat, cfg)
    v = solve(np.asarray(inst.loss_grad_delta(theta, delta_hat), dtype=float))
    return (np.asarray(inst.loss_grad_theta(theta, delta_hat), dtype=float)
            - inst.h_cross_jac_vec(theta, delta_hat, v))


def _as_delta(entry) -> np.ndarray:
    if isinstance(entry, InnerSolveReport):
        return entry.delta_K
    return np.asarray(entry, dtype=float)


def done_total_gradient(problem: CboProblem, theta: np.ndarray,
                        inner_reports: Sequence, cfg: HypergradConfig) -> np.ndarray:
    """Full-batch gradient of f(mean_i g_i(theta, delta_i*(theta))).

    Generic path: average the per-instance hypergradient rows and contract
    with grad f at the averaged composed value.  When every instance carries
    raw-loss oracles and the problem declares a reweighting strength, the
    same quantity is computed as the softmax-weighted average of loss
    hypergradients, which is invariant to shifting all losses by a constant
    and never exponentiates anything large.
    """
    if len(inner_reports) != problem.dims.M:
        raise ValueError("expected one inner solution per instance")
    deltas = [_as_delta(e) for e in inner_reports]

    stable = (problem.reweight_r is not None
              and all(inst.has_loss_oracles for inst in problem.instances))
    if stable:
        losses = np.array([inst.loss_value(theta, de)
                           for inst, de in zip(problem.instances, deltas)])
        grads = [_loss_hypergrad(inst, theta, de, cfg)
                 for inst, de in zip(problem.instances, deltas)]
        w = optimal_weights(losses, DroParams(problem.reweight_r.value)).w
        total = np.zeros(theta.shape[0])
        for wi, gi in zip(w, grads):
            total = total + wi * gi
        return total

    g_sum = None
    jac_sum = None
    for inst, de in zip(problem.instances, deltas):
        g = np.asarray(inst.g_value(theta, de), dtype=float)
        jac = instance_hypergrad(inst, theta, de, cfg)
        g_sum = g if g_sum is None else g_sum + g
        jac_sum = jac if jac_sum is None else jac_sum + jac
    g_mean = g_sum / problem.dims.M
    jac_mean = jac_sum / problem.dims.M
    return jac_mean.T @ problem.outer.gradient(g_mean)
