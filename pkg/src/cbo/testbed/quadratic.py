"""Synthetic quadratic instances with closed-form inner minimizers.

Each inner objective is h_i(theta, delta) = (delta - P_i theta - m_i)' D_i
(delta - P_i theta - m_i) / 2, so delta_i*(theta) = P_i theta + m_i exactly
and every library quantity can be checked against hand-assembled calculus.
The composed map g_i is linear in delta with an optional direct theta part,
quadratic when a curvature is requested so that the log outer objective has
an interior minimizer for convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import (
    BoxConstraint,
    CboProblem,
    Dims,
    OuterScalarFn,
    ProblemInstance,
    linear_outer,
    log_outer,
)


@dataclass(frozen=True)
class QuadraticCboSpec:
    """Generator matrices for one instance."""

    P: np.ndarray          # (p, d) inner-solution sensitivity
    m: np.ndarray          # (p,)  inner-solution offset
    D: np.ndarray          # (p, p) SPD inner curvature
    Q: np.ndarray          # (m, p) linear delta -> g map
    R: np.ndarray          # (m, d) direct theta -> g map
    s: np.ndarray          # (m,)  offset keeping g in the outer domain
    gamma: float           # >= 0, direct quadratic theta curvature of g
    center: np.ndarray     # (d,)  center of the quadratic theta term
    mu: float              # smallest eigenvalue of D
    L: float               # largest eigenvalue of D

    def delta_star(self, theta: np.ndarray) -> np.ndarray:
        return self.P @ theta + self.m

    def g_star(self, theta: np.ndarray) -> np.ndarray:
        quad = 0.5 * self.gamma * float(np.sum((theta - self.center) ** 2))
        return self.s + self.Q @ self.delta_star(theta) + self.R @ theta + quad

    def total_jacobian(self, theta: np.ndarray) -> np.ndarray:
        # d g_i(theta, delta*(theta)) / d theta, row per output coordinate
        return self.Q @ self.P + self.R + self.gamma * np.outer(
            np.ones(self.Q.shape[0]), theta - self.center)


@dataclass(frozen=True)
class QuadraticOracles:
    """Closed-form reference quantities for a generated problem."""

    specs: tuple[QuadraticCboSpec, ...]
    outer: OuterScalarFn
    outer_kind: str

    def delta_star(self, theta: np.ndarray, i: int) -> np.ndarray:
        return self.specs[i].delta_star(theta)

    def composed_mean(self, theta: np.ndarray) -> np.ndarray:
        total = self.specs[0].g_star(theta)
        for spec in self.specs[1:]:
            total = total + spec.g_star(theta)
        return total / len(self.specs)

    def objective(self, theta: np.ndarray) -> float:
        return self.outer.evaluate(self.composed_mean(theta))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        jac = self.specs[0].total_jacobian(theta)
        for spec in self.specs[1:]:
            jac = jac + spec.total_jacobian(theta)
        jac = jac / len(self.specs)
        return jac.T @ self.outer.gradient(self.composed_mean(theta))

    def minimizer_theta(self) -> np.ndarray:
        """Interior stationary point; requires m = 1, log outer, curvature > 0.

        With a scalar composed value the gradient vanishes exactly where the
        mean composed value does, which is the vertex of a strictly convex
        quadratic in theta.
        """
        if self.outer_kind != "log":
            raise ValueError("minimizer is only defined for the log outer")
        if self.specs[0].Q.shape[0] != 1:
            raise ValueError("minimizer is only defined for scalar g")
        gamma_mean = np.mean([spec.gamma for spec in self.specs])
        if not gamma_mean > 0:
            raise ValueError("minimizer needs positive theta curvature")
        d = self.specs[0].P.shape[1]
        lin = np.zeros(d)
        pull = np.zeros(d)
        for spec in self.specs:
            lin = lin + (spec.Q @ spec.P + spec.R)[0]
            pull = pull + spec.gamma * spec.center
        M = len(self.specs)
        return (pull / M - lin / M) / gamma_mean


def _spd_with_spectrum(rng: np.random.Generator, p: int,
                       mu: float, L: float) -> tuple[np.ndarray, float, float]:
    """Random SPD matrix whose spectrum includes both mu and L exactly."""
    eigs = rng.uniform(mu, L, size=p)
    eigs[0] = mu
    if p > 1:
        eigs[-1] = L
    basis, _ = np.linalg.qr(rng.standard_normal((p, p)))
    D = basis @ np.diag(eigs) @ basis.T
    D = 0.5 * (D + D.T)
    return D, mu, L


def _make_instance(index: int, spec: QuadraticCboSpec,
                   constraint: BoxConstraint) -> ProblemInstance:
    P, m_off, D, Q, R, s = spec.P, spec.m, spec.D, spec.Q, spec.R, spec.s
    gamma, center = spec.gamma, spec.center

    def g_value(theta, delta):
        quad = 0.5 * gamma * float(np.sum((theta - center) ** 2))
        return s + Q @ delta + R @ theta + quad

    def g_grad_theta(theta, delta):
        return R + gamma * np.outer(np.ones(Q.shape[0]), theta - center)

    def g_grad_delta(theta, delta):
        return Q.copy()

    def h_value(theta, delta):
        e = delta - P @ theta - m_off
        return 0.5 * float(e @ (D @ e))

    def h_grad_delta(theta, delta):
        return D @ (delta - P @ theta - m_off)

    def h_hess_delta_vec(theta, delta, v):
        return D @ v

    def h_cross_jac_vec(theta, delta, v):
        return -P.T @ (D @ v)

    return ProblemInstance(
        index=index,
        g_value=g_value,
        g_grad_theta=g_grad_theta,
        g_grad_delta=g_grad_delta,
        h_value=h_value,
        h_grad_delta=h_grad_delta,
        h_hess_delta_vec=h_hess_delta_vec,
        h_cross_jac_vec=h_cross_jac_vec,
        constraint=constraint,
        strong_convexity_mu=spec.mu,
        smoothness_L=spec.L,
    )


def make_quadratic_cbo(seed: int, d: int, p: int, m: int, M: int,
                       outer: str = "linear",
                       mu: float = 1.0, L: float = 4.0,
                       theta_curvature: float = 0.0,
                       box_halfwidth: float = 10.0,
                       log_scale: float = 1.0) -> tuple[CboProblem, QuadraticOracles]:
    """Generate a seeded problem plus its closed-form oracles.

    outer is "linear" or "log"; theta_curvature > 0 gives each g_i a strictly
    convex direct theta term (per-instance strength drawn around the given
    value) so the log objective has an interior minimizer.  Boxes are wide
    enough that inner minimizers stay strictly interior for moderate theta.
    """
    if outer not in ("linear", "log"):
        raise ValueError("outer must be 'linear' or 'log'")
    rng = np.random.default_rng(seed)
    constraint = BoxConstraint(b=np.full(2 * p, box_halfwidth),
                               interior_point=np.zeros(p))
    specs = []
    for i in range(M):
        P = rng.standard_normal((p, d)) / np.sqrt(d)
        m_off = rng.normal(0.0, 0.3, size=p)
        D, mu_i, L_i = _spd_with_spectrum(rng, p, mu, L)
        Q = rng.standard_normal((m, p)) / np.sqrt(p)
        R = rng.standard_normal((m, d)) / np.sqrt(d)
        if outer == "log":
            s = 10.0 + rng.uniform(0.0, 2.0, size=m)
        else:
            s = rng.normal(0.0, 1.0, size=m)
        if theta_curvature > 0:
            gamma = theta_curvature * rng.uniform(0.5, 1.5)
            center = rng.normal(0.0, 0.5, size=d)
        else:
            gamma = 0.0
            center = np.zeros(d)
        specs.append(QuadraticCboSpec(P=P, m=m_off, D=D, Q=Q, R=R, s=s,
                                      gamma=gamma, center=center, mu=mu_i, L=L_i))

    if outer == "linear":
        outer_fn = linear_outer(rng.uniform(0.5, 1.5, size=m))
    else:
        outer_fn = log_outer(log_scale, domain_floor=1e-8)

    instances = tuple(_make_instance(i, spec, constraint)
                      for i, spec in enumerate(specs))
    problem = CboProblem(instances=instances, outer=outer_fn,
                         dims=Dims(d=d, p=p, m=m, M=M))
    oracles = QuadraticOracles(specs=tuple(specs), outer=outer_fn, outer_kind=outer)
    return problem, oracles
