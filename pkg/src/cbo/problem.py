"""Core problem types: constrained inner problems, outer maps, oracle audits.

A compositional bilevel problem minimizes f(mean_i g_i(theta, delta_i*(theta)))
where each delta_i* minimizes an inner objective h_i(theta, .) over a box.
Every concrete instance supplies explicit value/gradient/curvature callables;
nothing here differentiates automatically, which keeps the finite-difference
audit meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DegenerateBoxError, NumericError


class Dims(NamedTuple):
    d: int  # outer parameter dimension
    p: int  # inner variable dimension
    m: int  # output dimension of each g_i
    M: int  # number of instances


class ScalarCell:
    """Mutable scalar shared between a problem's oracles and the driver.

    Problems are immutable after construction; schedule-driven values (the
    reweighting strength) live in one of these so the driver can advance them
    without rebuilding oracles.
    """

    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def __repr__(self):
        return f"ScalarCell({self.value!r})"


@dataclass(frozen=True)
class BoxConstraint:
    """Axis-aligned box encoded as stacked linear constraints A delta <= b.

    A is (I_p, -I_p) stacked, so b[:p] are the upper half-widths and b[p:]
    the lower half-widths; the feasible set is -b[p+k] <= delta_k <= b[k].
    """

    b: np.ndarray                 # shape (2p,), all entries > 0
    interior_point: np.ndarray    # shape (p,), strictly feasible

    @property
    def p(self) -> int:
        return self.b.shape[0] // 2

    @property
    def A(self) -> np.ndarray:
        eye = np.eye(self.p)
        return np.vstack([eye, -eye])

    @property
    def lower(self) -> np.ndarray:
        return -self.b[self.p:]

    @property
    def upper(self) -> np.ndarray:
        return self.b[: self.p]

    def margins(self, delta: np.ndarray) -> np.ndarray:
        """All 2p residuals b - A delta, positive iff strictly feasible."""
        return np.concatenate([self.b[: self.p] - delta, self.b[self.p:] + delta])

    def project(self, delta: np.ndarray) -> np.ndarray:
        """Euclidean projection: coordinatewise clamp into the box."""
        return np.clip(delta, self.lower, self.upper)

    def validate(self):
        p = self.p
        if self.b.shape != (2 * p,) or self.interior_point.shape != (p,):
            raise ValueError("inconsistent box shapes")
        if np.any(self.b <= 0):
            raise DegenerateBoxError("box has a side of non-positive width")
        if np.any(self.margins(self.interior_point) <= 0):
            raise DegenerateBoxError("interior_point is not strictly feasible")


def build_box_constraints(x: np.ndarray, epsilon: float) -> BoxConstraint:
    """Attack set for an input x in [0,1]^p under an sup-norm radius epsilon.

    b[k] = min(epsilon, 1 - x[k]) and b[p+k] = min(epsilon, x[k]); a
    coordinate of x at exactly 0 or 1 makes one side zero-width and is
    rejected, since a log barrier is undefined on an empty interior.
    The interior point is the box center, which maximizes the smallest
    barrier margin.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [0,1]^p")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    hi = np.minimum(epsilon, 1.0 - x)
    lo = np.minimum(epsilon, x)
    if np.any(hi <= 0.0) or np.any(lo <= 0.0):
        raise DegenerateBoxError(
            "input coordinate at 0 or 1 yields a zero-width box side; "
            "clip features away from the boundary first"
        )
    center = (hi - lo) / 2.0
    return BoxConstraint(b=np.concatenate([hi, lo]), interior_point=center)


def finite_difference_gradient(fn: Callable[[np.ndarray], float],
                               point: np.ndarray,
                               step: float) -> np.ndarray:
    """Central-difference gradient, the oracle behind every gradient audit."""
    point = np.asarray(point, dtype=float)
    if not step > 0.0:
        raise ValueError("step must be positive")
    grad = np.empty_like(point)
    for k in range(point.size):
        e = np.zeros_like(point)
        e[k] = step
        hi = fn(point + e)
        lo = fn(point - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite evaluation in finite differences at coordinate {k}")
        grad[k] = (hi - lo) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class OuterScalarFn:
    """The outer map f applied to the averaged composed values.

    evaluate and gradient must only be called on vectors whose coordinates
    are all >= domain_floor; the driver clamps its running estimate to
    guarantee this.
    """

    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    domain_floor: float = -np.inf


def linear_outer(weights: np.ndarray) -> OuterScalarFn:
    """f(z) = weights . z; makes the compositional bias vanish."""
    weights = np.asarray(weights, dtype=float)

    def evaluate(z):
        return float(weights @ np.asarray(z, dtype=float))

    def gradient(z):
        return weights.copy()

    return OuterScalarFn(evaluate=evaluate, gradient=gradient)


def log_outer(scale: "float | ScalarCell", domain_floor: float = 1e-8) -> OuterScalarFn:
    """f(z) = scale * sum_j log(z_j), the reweighted-attack outer map for m=1.

    scale may be a ScalarCell so a decaying schedule can drive it.
    """
    cell = scale if isinstance(scale, ScalarCell) else ScalarCell(scale)

    def evaluate(z):
        return float(cell.value * np.sum(np.log(np.asarray(z, dtype=float))))

    def gradient(z):
        return cell.value / np.asarray(z, dtype=float)

    return OuterScalarFn(evaluate=evaluate, gradient=gradient, domain_floor=domain_floor)


@dataclass(frozen=True)
class ProblemInstance:
    """One (g_i, h_i) pair with explicit oracles; the unit of minibatch sampling.

    Shapes: g_value (m,), g_grad_theta (m, d), g_grad_delta (m, p),
    h_grad_delta (p,), h_hess_delta_vec (p,) and h_cross_jac_vec (d,) for a
    direction v of shape (p,). The optional loss oracles expose the raw
    scalar loss when g is its exponential rescaling, enabling a shift-stable
    full-batch gradient.
    """

    index: int
    g_value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g_grad_theta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g_grad_delta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h_value: Callable[[np.ndarray, np.ndarray], float]
    h_grad_delta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h_hess_delta_vec: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    h_cross_jac_vec: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    constraint: BoxConstraint
    strong_convexity_mu: float
    smoothness_L: float
    loss_value: Callable[[np.ndarray, np.ndarray], float] | None = None
    loss_grad_theta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    loss_grad_delta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.strong_convexity_mu > 0:
            raise ValueError("strong_convexity_mu must be positive")
        if self.smoothness_L < self.strong_convexity_mu:
            raise ValueError("smoothness_L must be >= strong_convexity_mu")

    @property
    def has_loss_oracles(self) -> bool:
        return (self.loss_value is not None
                and self.loss_grad_theta is not None
                and self.loss_grad_delta is not None)


@dataclass(frozen=True)
class CboProblem:
    """A finite collection of instances plus the outer map."""

    instances: tuple[ProblemInstance, ...]
    outer: OuterScalarFn
    dims: Dims
    reweight_r: ScalarCell | None = field(default=None)

    def __post_init__(self):
        if len(self.instances) != self.dims.M:
            raise ValueError("dims.M does not match the number of instances")
        for inst in self.instances:
            if inst.constraint.p != self.dims.p:
                raise ValueError("instance constraint dimension differs from dims.p")


# ---------------------------------------------------------------------------
# Oracle audits.  These are the library's trust anchor: every registered
# derivative callable is compared against central differences of the value
# callable it claims to differentiate.

def _interior_points(constraint: BoxConstraint, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    lo, hi = constraint.lower, constraint.upper
    # stay in the middle 60% of the box so finite-difference probes remain feasible
    return [lo + (0.2 + 0.6 * rng.random(constraint.p)) * (hi - lo) for _ in range(n)]


def relative_mismatch(actual: np.ndarray, expected: np.ndarray,
                      rtol: float = 1e-5, atol: float = 1e-7) -> float:
    """Largest componentwise error relative to the |a - e| <= atol + rtol|e| budget.

    Returns max_i |a_i - e_i| / (atol/rtol + |e_i|); a value <= rtol means the
    pair passes at relative tolerance rtol with absolute floor atol near zero.
    """
    actual = np.asarray(actual, dtype=float).ravel()
    expected = np.asarray(expected, dtype=float).ravel()
    return float(np.max(np.abs(actual - expected) / (atol / rtol + np.abs(expected))))


def audit_instance_gradients(inst: ProblemInstance,
                             theta_sampler: Callable[[np.random.Generator], np.ndarray],
                             rng: np.random.Generator,
                             n_points: int = 10,
                             fd_step: float = 1e-6,
                             rtol: float = 1e-5) -> dict[str, float]:
    """Check every oracle of one instance against finite differences.

    Returns the worst relative mismatch per oracle name; raises nothing, the
    caller decides what failing means.
    """
    worst: dict[str, float] = {}

    def _update(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    deltas = _interior_points(inst.constraint, n_points, rng)
    for delta in deltas:
        theta = theta_sampler(rng)
        m = np.asarray(inst.g_value(theta, delta)).shape[0]

        gt = np.asarray(inst.g_grad_theta(theta, delta))
        gd = np.asarray(inst.g_grad_delta(theta, delta))
        for j in range(m):
            fd_t = finite_difference_gradient(
                lambda th, j=j: float(np.asarray(inst.g_value(th, delta))[j]), theta, fd_step)
            _update("g_grad_theta", relative_mismatch(gt[j], fd_t))
            fd_d = finite_difference_gradient(
                lambda de, j=j: float(np.asarray(inst.g_value(theta, de))[j]), delta, fd_step)
            _update("g_grad_delta", relative_mismatch(gd[j], fd_d))

        fd_h = finite_difference_gradient(lambda de: inst.h_value(theta, de), delta, fd_step)
        _update("h_grad_delta", relative_mismatch(inst.h_grad_delta(theta, delta), fd_h))

        v = rng.standard_normal(inst.constraint.p)
        v /= max(np.linalg.norm(v), 1e-12)
        hv = inst.h_hess_delta_vec(theta, delta, v)
        fd_hv = (inst.h_grad_delta(theta, delta + fd_step * v)
                 - inst.h_grad_delta(theta, delta - fd_step * v)) / (2.0 * fd_step)
        _update("h_hess_delta_vec", relative_mismatch(hv, fd_hv))

        cj = inst.h_cross_jac_vec(theta, delta, v)
        fd_cj = finite_difference_gradient(
            lambda th: float(inst.h_grad_delta(th, delta) @ v), theta, fd_step)
        _update("h_cross_jac_vec", relative_mismatch(cj, fd_cj))

        if inst.has_loss_oracles:
            fd_lt = finite_difference_gradient(lambda th: inst.loss_value(th, delta), theta, fd_step)
            _update("loss_grad_theta", relative_mismatch(inst.loss_grad_theta(theta, delta), fd_lt))
            fd_ld = finite_difference_gradient(lambda de: inst.loss_value(theta, de), delta, fd_step)
            _update("loss_grad_delta", relative_mismatch(inst.loss_grad_delta(theta, delta), fd_ld))
    return worst


def audit_hessian_symmetry(inst: ProblemInstance,
                           theta: np.ndarray,
                           rng: np.random.Generator,
                           n_pairs: int = 10) -> float:
    """max |v'H(u) - u'H(v)| over random direction pairs at interior points."""
    worst = 0.0
    for delta in _interior_points(inst.constraint, n_pairs, rng):
        u = rng.standard_normal(inst.constraint.p)
        v = rng.standard_normal(inst.constraint.p)
        a = float(v @ inst.h_hess_delta_vec(theta, delta, u))
        b = float(u @ inst.h_hess_delta_vec(theta, delta, v))
        worst = max(worst, abs(a - b))
    return worst


def check_strong_convexity(value_fn: Callable[[np.ndarray], float],
                           grad_fn: Callable[[np.ndarray], np.ndarray],
                           constraint: BoxConstraint,
                           mu: float,
                           rng: np.random.Generator,
                           n_pairs: int = 100) -> float:
    """Worst slack of the mu-strong-convexity inequality over sampled pairs.

    Nonnegative slack (up to roundoff) certifies h(y) >= h(x) + g(x)'(y-x)
    + mu/2 |y-x|^2 on the sampled pairs.
    """
    worst = np.inf
    pts = _interior_points(constraint, 2 * n_pairs, rng)
    for x, y in zip(pts[::2], pts[1::2]):
        lhs = value_fn(y)
        rhs = value_fn(x) + float(grad_fn(x) @ (y - x)) + 0.5 * mu * float(np.sum((y - x) ** 2))
        worst = min(worst, lhs - rhs)
    return float(worst)
