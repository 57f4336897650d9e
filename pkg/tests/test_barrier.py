import numpy as np
import pytest

from cbo import (
    BarrierObjective,
    BoundaryViolationError,
    BoxConstraint,
    RawInnerObjective,
    barrier_curvature_diag,
    barrier_gradient,
    barrier_value,
    finite_difference_gradient,
    inner_solve,
)

EPS = 8.0 / 255.0


def _box(halfwidths_hi, halfwidths_lo=None):
    hi = np.asarray(halfwidths_hi, dtype=float)
    lo = np.asarray(halfwidths_lo, dtype=float) if halfwidths_lo is not None else hi.copy()
    return BoxConstraint(b=np.concatenate([hi, lo]),
                         interior_point=np.zeros(hi.shape[0]))


def _zero_base(box, c):
    return BarrierObjective(base_value=lambda th, de: 0.0,
                            base_grad=lambda th, de: np.zeros(de.shape[0]),
                            constraint=box, c=c)


THETA = np.zeros(1)


def test_value_symmetric_center():
    obj = _zero_base(_box([EPS]), c=1.0)
    assert abs(barrier_value(obj, THETA, np.zeros(1)) - (-2.0 * np.log(EPS))) < 1e-14


def test_value_c_zero_is_base():
    box = _box([0.07])
    obj = BarrierObjective(base_value=lambda th, de: float(3.0 + de[0] ** 2),
                           base_grad=lambda th, de: 2.0 * de,
                           constraint=box, c=0.0)
    delta = np.array([0.03])
    assert barrier_value(obj, THETA, delta) == pytest.approx(3.0 + 0.03 ** 2, abs=1e-15)


def test_value_asymmetric_point():
    # margins 0.05 and 0.15 around delta = 0.05 in a width-0.1 box
    obj = _zero_base(_box([0.1]), c=2.0)
    expected = -2.0 * (np.log(0.05) + np.log(0.15))
    assert abs(barrier_value(obj, THETA, np.array([0.05])) - expected) < 1e-12


def test_value_boundary_error():
    obj = _zero_base(_box([0.1]), c=1.0)
    with pytest.raises(BoundaryViolationError):
        barrier_value(obj, THETA, np.array([0.1]))
    with pytest.raises(BoundaryViolationError):
        barrier_value(obj, THETA, np.array([0.2]))


def test_gradient_cancels_at_center():
    obj = _zero_base(_box([EPS]), c=0.7)
    assert np.allclose(barrier_gradient(obj, THETA, np.zeros(1)), 0.0, atol=1e-14)


def test_gradient_quadratic_base_center():
    box = _box([1.0])
    for c in (0.0, 0.3, 5.0):
        obj = BarrierObjective(base_value=lambda th, de: 0.5 * float(de @ de),
                               base_grad=lambda th, de: de.copy(),
                               constraint=box, c=c)
        assert np.allclose(barrier_gradient(obj, THETA, np.zeros(1)), 0.0, atol=1e-14)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    box = _box([0.2, 0.3, 0.25], [0.15, 0.3, 0.4])
    obj = BarrierObjective(
        base_value=lambda th, de: float(np.sin(de).sum() + 0.5 * de @ de),
        base_grad=lambda th, de: np.cos(de) + de,
        constraint=box, c=1.3e-2)
    for _ in range(10):
        # middle band of the box keeps finite-difference probes feasible
        u = 0.2 + 0.6 * rng.random(3)
        delta = box.lower + u * (box.upper - box.lower)
        fd = finite_difference_gradient(lambda de: barrier_value(obj, THETA, de), delta, 1e-7)
        grad = barrier_gradient(obj, THETA, delta)
        denom = np.maximum(np.abs(fd), 1e-2)
        assert np.max(np.abs(grad - fd) / denom) < 1e-5


def test_curvature_symmetric():
    box = _box([EPS])
    for c in (0.5, 2.0):
        diag = barrier_curvature_diag(box, c, np.zeros(1))
        assert np.allclose(diag, [2.0 * c / EPS ** 2], rtol=1e-12)


def test_curvature_two_dim_plugin():
    box = _box([0.1, 0.2])
    diag = barrier_curvature_diag(box, 1.0, np.zeros(2))
    assert np.allclose(diag, [200.0, 50.0], rtol=1e-12)
    # independent check: loop over all 2p rows of A accumulating gamma_k a_k a_k'
    A = box.A
    full = np.zeros((2, 2))
    for k in range(4):
        margin = box.b[k] - A[k] @ np.zeros(2)
        full += np.outer(A[k], A[k]) / margin ** 2
    assert np.allclose(np.diag(full), diag, rtol=1e-12)
    assert np.allclose(full - np.diag(np.diag(full)), 0.0)


def test_curvature_c_zero():
    assert np.allclose(barrier_curvature_diag(_box([0.3, 0.1]), 0.0, np.zeros(2)), 0.0)


def test_curvature_positive_anywhere_interior():
    rng = np.random.default_rng(6)
    box = _box([0.5, 0.2, 0.9])
    for _ in range(50):
        delta = box.lower + rng.random(3) * (box.upper - box.lower) * 0.98 + 0.01 * box.lower
        diag = barrier_curvature_diag(box, 1e-3, box.project(delta) * 0.99)
        assert np.all(diag > 0)


def _quadratic_raw(target, D, box):
    return RawInnerObjective(
        base_value=lambda th, de: 0.5 * float((de - target) @ (D @ (de - target))),
        base_grad=lambda th, de: D @ (de - target),
        constraint=box)


def test_inner_solve_exact_newton_step():
    # isotropic quadratic, alpha = 1/mu, one step lands exactly on the target
    box = _box([2.0, 2.0])
    target = np.array([0.3, -0.7])
    mu = 2.5
    obj = _quadratic_raw(target, mu * np.eye(2), box)
    rep = inner_solve(obj, THETA, box.interior_point, alpha=1.0 / mu, K=1)
    assert np.allclose(rep.delta_K, target, atol=1e-15)
    assert rep.final_grad_norm < 1e-12


def test_inner_solve_equal_curvature_contracts_in_one_step():
    # L = mu makes the contraction factor (L-mu)/(L+mu) = 0
    box = _box([3.0])
    mu = 1.7
    obj = _quadratic_raw(np.array([0.9]), mu * np.eye(1), box)
    rep = inner_solve(obj, THETA, np.array([-1.2]), alpha=2.0 / (mu + mu), K=1)
    assert abs(rep.delta_K[0] - 0.9) < 1e-14


def test_inner_solve_anisotropic_contraction_ratio():
    # D = diag(1, 4): alpha = 2/(L+mu) gives per-step ratio exactly 3/5
    box = _box([10.0, 10.0])
    D = np.diag([1.0, 4.0])
    target = np.array([0.5, -0.25])
    obj = _quadratic_raw(target, D, box)
    alpha = 2.0 / (4.0 + 1.0)
    expected = (4.0 - 1.0) / (4.0 + 1.0)
    delta = np.array([3.0, 2.0])
    prev_err = np.linalg.norm(delta - target)
    for k in range(20):
        rep = inner_solve(obj, THETA, delta, alpha=alpha, K=1)
        delta = rep.delta_K
        err = np.linalg.norm(delta - target)
        if prev_err < 1e-13:
            break
        assert abs(err / prev_err - expected) < 0.05 * expected
        prev_err = err


def test_inner_solve_k_zero_returns_start():
    box = _box([1.0])
    obj = _quadratic_raw(np.array([0.4]), np.eye(1), box)
    start = np.array([-0.3])
    rep = inner_solve(obj, THETA, start, alpha=0.5, K=0)
    assert np.array_equal(rep.delta_K, start)


def test_inner_solve_strict_feasibility_under_barrier():
    rng = np.random.default_rng(7)
    box = _box([0.05, 0.08])
    for _ in range(50):
        target = rng.uniform(-0.2, 0.2, size=2)  # often outside the box
        obj = BarrierObjective(
            base_value=lambda th, de, t=target: 2.0 * float((de - t) @ (de - t)),
            base_grad=lambda th, de, t=target: 4.0 * (de - t),
            constraint=box, c=1e-3)
        start = box.interior_point + rng.uniform(-0.9, 0.9, size=2) * box.upper * 0.99
        rep = inner_solve(obj, THETA, start, alpha=0.1, K=30)
        assert rep.min_margin > 0


def test_inner_solve_monotone_descent_under_barrier():
    rng = np.random.default_rng(8)
    box = _box([0.1, 0.1, 0.1])
    target = np.array([0.3, -0.3, 0.05])
    obj = BarrierObjective(
        base_value=lambda th, de: 5.0 * float((de - target) @ (de - target)),
        base_grad=lambda th, de: 10.0 * (de - target),
        constraint=box, c=1e-2)
    delta = box.interior_point.copy()
    values = [obj.value(THETA, delta)]
    for _ in range(40):
        rep = inner_solve(obj, THETA, delta, alpha=0.05, K=1)
        delta = rep.delta_K
        values.append(obj.value(THETA, delta))
    diffs = np.diff(values)
    assert np.all(diffs <= 1e-12)


def test_inner_solve_nonfinite_gradient_error():
    box = _box([1.0])
    obj = RawInnerObjective(base_value=lambda th, de: float("nan"),
                            base_grad=lambda th, de: np.array([float("nan")]),
                            constraint=box)
    with pytest.raises(Exception):
        inner_solve(obj, THETA, np.zeros(1), alpha=0.1, K=3)


def test_inner_solve_sign_and_adam_stay_feasible():
    box = _box([0.05, 0.05])
    target = np.array([0.5, 0.5])
    obj = BarrierObjective(
        base_value=lambda th, de: float((de - target) @ (de - target)),
        base_grad=lambda th, de: 2.0 * (de - target),
        constraint=box, c=1e-3)
    for method in ("sign", "adam"):
        rep = inner_solve(obj, THETA, box.interior_point, alpha=0.02, K=25, method=method)
        assert rep.min_margin > 0
