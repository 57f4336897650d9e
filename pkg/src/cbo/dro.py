"""Worst-case instance weights under a KL pull toward uniform.

The inner maximization max_w sum_i w_i l_i - r sum_i w_i log(M w_i) over the
probability simplex has the closed-form solution w_i* proportional to
exp(l_i / r); substituting it back turns the weighted objective into a
log-mean-exp of the losses.  Everything here is pure and vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class DroParams:
    """Regularization strength r > 0; r = 0 would collapse the weights to a
    one-hot argmax and is rejected outright."""

    r: float

    def __post_init__(self):
        if not self.r > 0.0:
            raise ConfigError(f"dro regularization r must be > 0, got {self.r}")


@dataclass(frozen=True)
class SimplexWeights:
    w: np.ndarray

    def __post_init__(self):
        if np.any(self.w < 0):
            raise ValueError("simplex weights must be nonnegative")
        if abs(float(np.sum(self.w)) - 1.0) > 1e-12:
            raise ValueError("simplex weights must sum to one")


def optimal_weights(losses: np.ndarray, params: DroParams) -> SimplexWeights:
    """Closed-form maximizer: shifted softmax of losses / r.

    The shift by max(losses) makes the exponentials safe for any loss scale
    and cancels exactly in the normalization.
    """
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise NumericError("losses must be finite")
    z = (losses - np.max(losses)) / params.r
    e = np.exp(z)
    return SimplexWeights(w=e / np.sum(e))


def regularized_inner_max_value(losses: np.ndarray,
                                weights: SimplexWeights,
                                params: DroParams) -> float:
    """Weighted loss minus the KL(w || uniform) penalty, with 0 log 0 = 0."""
    losses = np.asarray(losses, dtype=float)
    w = weights.w
    M = w.shape[0]
    kl_terms = np.where(w > 0.0, w * np.log(np.maximum(M * w, 1e-300)), 0.0)
    return float(w @ losses - params.r * np.sum(kl_terms))


def logsumexp_objective(losses: np.ndarray, params: DroParams) -> float:
    """r * log-mean-exp of losses / r, computed with max-shift stabilization.

    Equals regularized_inner_max_value at the optimal weights; nondecreasing
    in every loss and sandwiched between mean(losses) and max(losses).
    """
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise NumericError("losses must be finite")
    s = float(np.max(losses))
    z = (losses - s) / params.r
    return s + params.r * float(np.log(np.mean(np.exp(z))))


# ---------------------------------------------------------------------------
# Independent numerical maximizers.  These never touch the softmax formula;
# they exist to certify optimal_weights and are deliberately kept separate
# from anything the closed form could share.

def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u * idx > (css - 1.0))[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _objective_and_gradient(w, losses, r, floor):
    M = w.shape[0]
    kl = np.where(w > 0.0, w * np.log(np.maximum(M * w, 1e-300)), 0.0)
    value = float(w @ losses - r * np.sum(kl))
    grad = losses - r * (np.log(np.maximum(M * w, floor)) + 1.0)
    return value, grad


def maximize_weights_newton(losses: np.ndarray, params: DroParams,
                            max_iters: int = 200, tol: float = 1e-14) -> np.ndarray:
    """Equality-constrained Newton ascent on the simplex interior.

    The Hessian of the objective is -r diag(1/w), so the Newton direction on
    the sum-to-one plane is d_i = (w_i / r)(grad_i - w . grad); a
    fraction-to-boundary rule keeps the iterate strictly positive and an
    Armijo backtrack guarantees monotone ascent.  Converges to machine
    precision even when the optimum is nearly one-hot.
    """
    losses = np.asarray(losses, dtype=float)
    M = losses.shape[0]
    w = np.full(M, 1.0 / M)
    fw, g = _objective_and_gradient(w, losses, params.r, floor=1e-300)
    for _ in range(max_iters):
        d = (w / params.r) * (g - float(w @ g))
        if float(np.max(np.abs(d))) < tol:
            break
        neg = d < 0
        tmax = 1.0
        if np.any(neg):
            tmax = min(1.0, 0.995 * float(np.min(-w[neg] / d[neg])))
        step = tmax
        slope = float(g @ d)
        cand, fc = w, fw
        for _ in range(60):
            cand = w + step * d
            fc, _ = _objective_and_gradient(cand, losses, params.r, floor=1e-300)
            if fc >= fw + 1e-4 * step * slope:
                break
            step *= 0.5
        w = cand / float(np.sum(cand))
        fw, g = _objective_and_gradient(w, losses, params.r, floor=1e-300)
    return w


def maximize_weights_ascent(losses: np.ndarray, params: DroParams,
                            max_iters: int = 100_000,
                            step_scale: float = 0.1,
                            tol: float = 1e-16) -> np.ndarray:
    """Projected gradient ascent with Euclidean simplex projection.

    Initial step step_scale / max|l| with Armijo halving as a safeguard: the
    plain fixed step oscillates whenever r * M * step exceeds the stability
    threshold, and crawls when the optimum is nearly one-hot, so this variant
    is the certification oracle only for moderate loss/r ratios.
    """
    losses = np.asarray(losses, dtype=float)
    M = losses.shape[0]
    w = np.full(M, 1.0 / M)
    step0 = step_scale / max(float(np.max(np.abs(losses))), 1e-12)
    fw, g = _objective_and_gradient(w, losses, params.r, floor=1e-12)
    for _ in range(max_iters):
        step = step0
        cand = project_to_simplex(w + step * g)
        fc, _ = _objective_and_gradient(cand, losses, params.r, floor=1e-12)
        n = 0
        while fc < fw + 1e-4 * float(g @ (cand - w)) and n < 60:
            step *= 0.5
            cand = project_to_simplex(w + step * g)
            fc, _ = _objective_and_gradient(cand, losses, params.r, floor=1e-12)
            n += 1
        move = float(np.max(np.abs(cand - w)))
        w = cand
        fw, g = _objective_and_gradient(w, losses, params.r, floor=1e-12)
        if move <= tol:
            break
    return w
