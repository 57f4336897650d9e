import numpy as np
import pytest

from cbo import DegenerateBoxError, build_box_constraints, finite_difference_gradient
from cbo.problem import (
    audit_hessian_symmetry,
    audit_instance_gradients,
    check_strong_convexity,
    relative_mismatch,
)
from cbo.testbed import make_quadratic_cbo

EPS_PIXEL = 8.0 / 255.0


def test_box_centered_pixel():
    box = build_box_constraints(np.array([0.5]), EPS_PIXEL)
    assert np.allclose(box.b, [EPS_PIXEL, EPS_PIXEL])
    assert box.margins(box.interior_point).min() > 0


def test_box_near_edge_pixel():
    box = build_box_constraints(np.array([0.01]), EPS_PIXEL)
    assert np.allclose(box.b, [EPS_PIXEL, 0.01])


def test_box_degenerate_side():
    with pytest.raises(DegenerateBoxError):
        build_box_constraints(np.array([0.0]), 0.1)


def test_box_interior_point_margins():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(0.05, 0.95, size=6)
        box = build_box_constraints(x, 0.1)
        # center maximizes the smallest margin; both sides equal there
        margins = box.margins(box.interior_point)
        assert margins.min() > 0
        assert np.allclose(margins[:6], margins[6:])


def test_box_roundtrip_feasible_points():
    rng = np.random.default_rng(4)
    box = build_box_constraints(rng.uniform(0.2, 0.8, size=5), 0.15)
    for _ in range(100):
        delta = box.lower + rng.random(5) * (box.upper - box.lower)
        delta = 0.999 * delta
        assert np.all(box.margins(delta) > 0)


def test_fd_gradient_squared_norm():
    grad = finite_difference_gradient(lambda v: float(v @ v), np.array([1.0, 2.0]), 1e-5)
    assert np.allclose(grad, [2.0, 4.0], atol=1e-8)


def test_fd_gradient_constant():
    grad = finite_difference_gradient(lambda v: 3.5, np.array([0.3, -0.2, 1.0]), 1e-5)
    assert np.all(np.abs(grad) < 1e-10)


def test_fd_gradient_exp():
    grad = finite_difference_gradient(lambda v: float(np.exp(v[0])), np.array([0.0]), 1e-5)
    assert abs(grad[0] - 1.0) < 1e-9


def test_quadratic_oracles_pass_fd_audit():
    problem, _ = make_quadratic_cbo(seed=11, d=4, p=3, m=2, M=4, outer="linear")
    rng = np.random.default_rng(0)
    for inst in problem.instances:
        worst = audit_instance_gradients(
            inst, lambda r: r.normal(0.0, 1.0, size=4), rng, n_points=10)
        for name, err in worst.items():
            assert err <= 1e-5, f"{name} mismatch {err}"


def test_hessian_vector_product_symmetry():
    problem, _ = make_quadratic_cbo(seed=12, d=3, p=4, m=1, M=3)
    rng = np.random.default_rng(1)
    theta = rng.normal(size=3)
    for inst in problem.instances:
        assert audit_hessian_symmetry(inst, theta, rng) < 1e-10


def test_strong_convexity_certificate():
    problem, _ = make_quadratic_cbo(seed=13, d=3, p=3, m=1, M=5)
    rng = np.random.default_rng(2)
    theta = rng.normal(size=3)
    for inst in problem.instances:
        slack = check_strong_convexity(
            lambda de: inst.h_value(theta, de),
            lambda de: inst.h_grad_delta(theta, de),
            inst.constraint, inst.strong_convexity_mu, rng, n_pairs=100)
        assert slack >= -1e-10


def test_relative_mismatch_scoring():
    assert relative_mismatch(np.array([1.0 + 1e-6]), np.array([1.0])) <= 1e-5
    assert relative_mismatch(np.array([1.0 + 1e-3]), np.array([1.0])) > 1e-5
    # absolute floor applies near zero
    assert relative_mismatch(np.array([5e-8]), np.array([0.0])) <= 1e-5
