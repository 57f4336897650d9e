"""Log-barrier inner objectives and the projected-descent inner solver.

The barrier replaces the hard box constraint with -c * sum_k log(b_k - a_k'd),
which blows up at the boundary and therefore keeps the minimizer strictly
interior, where it is differentiable in the outer parameters.  The solver runs
plain projected descent on either the barrier objective (with a feasibility
and descent safeguard) or the raw inner objective (projection only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BoundaryViolationError, NumericError
from .problem import BoxConstraint, ProblemInstance

_MARGIN_FLOOR = 1e-12   # smallest acceptable barrier margin after a safeguarded step
_DESCENT_SLACK = 1e-12  # allowed per-step objective increase in safeguarded mode


@dataclass(frozen=True)
class BarrierObjective:
    """Inner objective plus log-barrier penalty over a box.

    value(theta, delta) = base(theta, delta) - c * sum_k log(margin_k) and is
    only defined strictly inside the box; evaluating on or past a face raises.
    """

    base_value: Callable[[np.ndarray, np.ndarray], float]
    base_grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraint: BoxConstraint
    c: float

    needs_interior = True

    def _checked_margins(self, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.constraint.p
        hi = self.constraint.b[:p] - delta
        lo = self.constraint.b[p:] + delta
        if np.any(hi <= 0.0) or np.any(lo <= 0.0):
            raise BoundaryViolationError("barrier evaluated at or outside the box boundary")
        return hi, lo

    def value(self, theta: np.ndarray, delta: np.ndarray) -> float:
        hi, lo = self._checked_margins(delta)
        v = float(self.base_value(theta, delta))
        if self.c:
            v -= self.c * float(np.sum(np.log(hi)) + np.sum(np.log(lo)))
        return v

    def gradient(self, theta: np.ndarray, delta: np.ndarray) -> np.ndarray:
        # rows of A are +e_k (upper) and -e_k (lower), so the two sides
        # contribute with opposite signs and cancel at the box center
        hi, lo = self._checked_margins(delta)
        g = np.asarray(self.base_grad(theta, delta), dtype=float)
        if self.c:
            g = g + self.c * (1.0 / hi - 1.0 / lo)
        return g

    @classmethod
    def from_instance(cls, inst: ProblemInstance, c: float) -> "BarrierObjective":
        return cls(base_value=inst.h_value, base_grad=inst.h_grad_delta,
                   constraint=inst.constraint, c=c)


@dataclass(frozen=True)
class RawInnerObjective:
    """The inner objective with projection only; iterates may touch the boundary."""

    base_value: Callable[[np.ndarray, np.ndarray], float]
    base_grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraint: BoxConstraint

    needs_interior = False

    def value(self, theta, delta):
        return float(self.base_value(theta, delta))

    def gradient(self, theta, delta):
        return np.asarray(self.base_grad(theta, delta), dtype=float)

    @classmethod
    def from_instance(cls, inst: ProblemInstance) -> "RawInnerObjective":
        return cls(base_value=inst.h_value, base_grad=inst.h_grad_delta,
                   constraint=inst.constraint)


def barrier_value(obj: BarrierObjective, theta: np.ndarray, delta: np.ndarray) -> float:
    return obj.value(theta, delta)


def barrier_gradient(obj: BarrierObjective, theta: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return obj.gradient(theta, delta)


def barrier_curvature_diag(constraint: BoxConstraint, c: float,
                           delta_hat: np.ndarray) -> np.ndarray:
    """Diagonal of the barrier Hessian c * sum_k a_k a_k' / margin_k^2.

    For the stacked box the outer products are diag(e_k), so entry k is
    c * (1/hi_k^2 + 1/lo_k^2); strictly positive whenever c > 0.
    """
    p = constraint.p
    hi = constraint.b[:p] - delta_hat
    lo = constraint.b[p:] + delta_hat
    if np.any(hi <= 0.0) or np.any(lo <= 0.0):
        raise BoundaryViolationError("curvature requested at or outside the box boundary")
    if not c:
        return np.zeros(p)
    return c * (1.0 / hi ** 2 + 1.0 / lo ** 2)


@dataclass(frozen=True)
class InnerSolveReport:
    delta_K: np.ndarray
    iterations: int
    final_grad_norm: float
    min_margin: float
    backtracks: int = 0


def inner_solve(obj, theta: np.ndarray, delta0: np.ndarray,
                alpha: float, K: int, method: str = "gd") -> InnerSolveReport:
    """K projected descent steps on obj from delta0.

    method selects the step form: plain gradient ("gd"), sign gradient
    ("sign"), or adaptive moments ("adam"); only "gd" carries convergence
    guarantees, the others are heuristics.  When obj needs a strict interior
    the candidate step is halved back toward the previous (strictly feasible)
    iterate until the margin floor holds, and in "gd" mode additionally until
    the objective stops increasing; halving toward an interior point restores
    both, so the loop terminates.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    constraint = obj.constraint
    delta = np.asarray(delta0, dtype=float).copy()
    safeguarded = obj.needs_interior
    backtracks = 0

    if method == "adam":
        m1 = np.zeros_like(delta)
        m2 = np.zeros_like(delta)

    prev_value = obj.value(theta, delta) if safeguarded else None
    for k in range(K):
        grad = obj.gradient(theta, delta)
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite inner gradient at iteration {k}")
        if method == "gd":
            step = alpha * grad
        elif method == "sign":
            step = alpha * np.sign(grad)
        elif method == "adam":
            m1 = 0.9 * m1 + 0.1 * grad
            m2 = 0.999 * m2 + 0.001 * grad ** 2
            mhat = m1 / (1.0 - 0.9 ** (k + 1))
            vhat = m2 / (1.0 - 0.999 ** (k + 1))
            step = alpha * mhat / (np.sqrt(vhat) + 1e-8)
        else:
            raise ValueError(f"unknown inner method {method!r}")

        cand = constraint.project(delta - step)
        if safeguarded:
            for _ in range(60):
                if float(np.min(constraint.margins(cand))) >= _MARGIN_FLOOR:
                    break
                cand = delta + 0.5 * (cand - delta)
                backtracks += 1
            if method == "gd":
                cand_value = obj.value(theta, cand)
                for _ in range(60):
                    if cand_value <= prev_value + _DESCENT_SLACK:
                        break
                    cand = delta + 0.5 * (cand - delta)
                    cand_value = obj.value(theta, cand)
                    backtracks += 1
                prev_value = cand_value
        delta = cand

    final_grad = obj.gradient(theta, delta)
    return InnerSolveReport(
        delta_K=delta,
        iterations=K,
        final_grad_norm=float(np.linalg.norm(final_grad)),
        min_margin=float(np.min(constraint.margins(delta))),
        backtracks=backtracks,
    )
