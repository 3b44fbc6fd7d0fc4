import numpy as np
import pytest

from proxshuffle import io
from proxshuffle.problems import (
    FiniteSumProblem,
    ReferenceFailure,
    compute_reference,
    full_gradient,
    grads_at,
    least_squares_from_arrays,
    lad_from_arrays,
    make_hinge,
    make_lad,
    make_lasso,
    make_least_squares,
    make_quadratic,
    objective_value,
    quadratic_from_arrays,
)
from proxshuffle.prox import BallIndicator, L1, SqL2, Zero


def symmetric_pair_problem():
    """1-d, n=2, f_i(x) = (x - a_i)^2 / 2 with a = (1, -1), as least squares."""
    return least_squares_from_arrays(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))


def test_full_gradient_symmetric_cancellation():
    p = symmetric_pair_problem()
    assert np.allclose(full_gradient(p, np.array([0.0])), [0.0])


def test_full_gradient_hand_value():
    p = symmetric_pair_problem()
    # ((1-1) + (1+1)) / 2 = 1
    assert np.allclose(full_gradient(p, np.array([1.0])), [1.0])


def test_full_gradient_n1_identity():
    p = least_squares_from_arrays(np.array([[2.0, 0.0]]), np.array([1.0]))
    x = np.array([0.3, -0.7])
    assert np.allclose(full_gradient(p, x), p.components[0].grad(x))


def test_full_gradient_dim_mismatch():
    p = symmetric_pair_problem()
    with pytest.raises(ValueError):
        full_gradient(p, np.zeros(2))


def test_objective_value_at_minimizer():
    p = symmetric_pair_problem()
    # F(0) = ((0-1)^2 + (0+1)^2) / 2 / 2 = 0.5
    assert np.isclose(objective_value(p, np.array([0.0])), 0.5)


def test_objective_infinite_outside_indicator():
    p = least_squares_from_arrays(
        np.array([[1.0], [1.0]]), np.array([1.0, -1.0]), reg=BallIndicator(1.0)
    )
    assert objective_value(p, np.array([5.0])) == np.inf


def test_objective_lasso_at_zero():
    p = make_lasso(4, 3, seed=2, lam=0.5)
    x0 = np.zeros(3)
    assert np.isclose(objective_value(p, x0), p.f_value(x0))


def test_make_quadratic_identity_case():
    p = quadratic_from_arrays([np.eye(2)], [np.zeros(2)])
    assert p.components[0].smooth_L == 1.0
    ref = compute_reference(p, np.zeros(2))
    assert np.allclose(ref.x_star, 0.0)
    assert ref.F_star == 0.0


def test_make_quadratic_constants():
    p = make_quadratic(5, 4, seed=3, mu_f_target=0.7)
    A = p.data.arrays["A"]
    for i, comp in enumerate(p.components):
        assert np.isclose(comp.smooth_L, np.linalg.eigvalsh(A[i])[-1])
    avg = A.mean(axis=0)
    assert np.isclose(p.mu_f, np.linalg.eigvalsh(avg)[0])
    assert p.mu_f >= 0.7 - 1e-12
    assert p.L_star == max(c.smooth_L for c in p.components)
    assert np.isclose(p.L_bar, np.mean([c.smooth_L for c in p.components]))


def test_make_quadratic_reproducible():
    a = make_quadratic(3, 2, seed=9)
    b = make_quadratic(3, 2, seed=9)
    assert np.array_equal(a.data.arrays["A"], b.data.arrays["A"])
    assert np.array_equal(a.data.arrays["b"], b.data.arrays["b"])


def test_symmetric_pair_constants():
    p = symmetric_pair_problem()
    assert p.L_bar == 1.0 and p.L_star == 1.0
    assert np.isclose(p.mu_f, 1.0)
    ref = compute_reference(p, np.array([1.0]))
    assert np.allclose(ref.x_star, 0.0, atol=1e-12)
    assert np.isclose(ref.F_star, 0.5)
    assert np.isclose(ref.D, 1.0)
    g = grads_at(p, ref.x_star)
    assert np.isclose(np.mean(np.sum(g**2, axis=1)), 1.0)  # sigma_any^2 = 1


def test_lad_row_norm_constant():
    p = lad_from_arrays(np.array([[3.0, 4.0]]), np.array([0.0]))
    assert p.components[0].lip_G == 5.0


def test_lad_kink_subgradient_zero():
    p = lad_from_arrays(np.array([[1.0, 1.0]]), np.array([1.0]))
    g = p.components[0].grad(np.array([0.5, 0.5]))  # residual exactly 0
    assert np.array_equal(g, [0.0, 0.0])


def test_hinge_kink_subgradient_zero():
    p = make_hinge(1, 2, seed=0)
    a = p.data.arrays["A"][0]
    y = p.data.arrays["y"][0]
    x = a / (y * float(a @ a))  # margin exactly 1
    assert np.allclose(p.components[0].grad(x), 0.0)
    # active side has slope -y*a
    assert np.allclose(p.components[0].grad(0.0 * x), -y * a)


def test_lasso_lambda_zero_degenerates():
    a = make_lasso(4, 2, seed=1, lam=0.0)
    b = make_least_squares(4, 2, seed=1)
    assert isinstance(a.reg, Zero)
    x = np.array([0.3, -0.8])
    assert np.isclose(a.objective_value(x), b.objective_value(x))


def test_zero_row_rejected():
    with pytest.raises(ValueError, match="zero row"):
        lad_from_arrays(np.array([[0.0, 0.0], [1.0, 2.0]]), np.array([1.0, 2.0]))


def test_mu_f_and_lip_G_incompatible():
    comp = make_lad(2, 2, seed=0).components
    with pytest.raises(ValueError):
        FiniteSumProblem(components=list(comp), reg=Zero(), mu_f=1.0, d=2)


def test_reference_quadratic_sql2_closed_form():
    p = make_quadratic(3, 3, seed=4, mu_f_target=0.1, reg=SqL2(0.8))
    ref = compute_reference(p, np.zeros(3))
    assert ref.method == "closed_form"
    # stationarity: grad f(x*) + mu*x* = 0
    resid = p.full_gradient(ref.x_star) + 0.8 * ref.x_star
    assert np.linalg.norm(resid) <= 1e-10


def test_reference_d_zero_at_optimum():
    p = symmetric_pair_problem()
    ref = compute_reference(p, np.array([0.0]))
    assert ref.D == 0.0


def test_reference_lasso_fixed_point():
    p = make_lasso(6, 3, seed=5, lam=0.3)
    ref = compute_reference(p, np.zeros(3))
    assert ref.method == "high_accuracy_solver"
    # 0 in grad f(x*) + d(psi)(x*) within tolerance
    assert p.reg.subdiff_distance(ref.x_star, -p.full_gradient(ref.x_star)) <= 1e-8


@pytest.mark.parametrize("maker", [
    lambda: make_lad(6, 3, seed=2),
    lambda: make_hinge(8, 3, seed=2, reg=SqL2(0.5)),
], ids=["lad", "hinge_sql2"])
def test_reference_nonsmooth_directional_optimality(maker):
    p = maker()
    ref = compute_reference(p, np.zeros(p.d))
    rng = np.random.default_rng(17)
    for eps in (1e-4, 1e-3):
        for _ in range(100):
            u = rng.standard_normal(p.d)
            u /= np.linalg.norm(u)
            assert p.objective_value(ref.x_star + eps * u) >= ref.F_star - 1e-8


def test_reference_optimality_random_directions_smooth():
    p = make_quadratic(4, 3, seed=8, mu_f_target=0.5)
    ref = compute_reference(p, np.zeros(3))
    rng = np.random.default_rng(23)
    for eps in (1e-4, 1e-3):
        for _ in range(100):
            u = rng.standard_normal(3)
            u /= np.linalg.norm(u)
            assert p.objective_value(ref.x_star + eps * u) >= ref.F_star - 1e-8


def test_convexity_sampled_pairs():
    p = make_quadratic(3, 4, seed=6)
    rng = np.random.default_rng(0)
    for comp in p.components:
        for _ in range(1000):
            x = rng.standard_normal(4)
            y = rng.standard_normal(4)
            fy = comp.value(y)
            assert fy >= comp.value(x) + float(np.dot(comp.grad(x), y - x)) - 1e-9 * (1 + abs(fy))


def test_strong_convexity_of_averaged_quadratic():
    p = make_quadratic(4, 3, seed=12, mu_f_target=0.6)
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.standard_normal(3)
        y = rng.standard_normal(3)
        breg = p.bregman_f(x, y)
        assert breg >= 0.5 * p.mu_f * float(np.sum((x - y) ** 2)) - 1e-12


def test_smoothness_sampled_pairs():
    p = make_quadratic(3, 4, seed=21)
    rng = np.random.default_rng(4)
    for comp in p.components:
        for _ in range(200):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            lhs = np.linalg.norm(comp.grad(x) - comp.grad(y))
            assert lhs <= comp.smooth_L * np.linalg.norm(x - y) + 1e-9


def test_lip_bound_sampled_points():
    p = make_lad(5, 3, seed=13)
    rng = np.random.default_rng(5)
    for comp in p.components:
        for _ in range(200):
            x = 10 * rng.standard_normal(3)
            assert np.linalg.norm(comp.grad(x)) <= comp.lip_G + 1e-12


@pytest.mark.parametrize("maker", [
    lambda: make_quadratic(3, 2, seed=1, mu_f_target=0.3, reg=SqL2(0.4)),
    lambda: make_least_squares(4, 2, seed=1, reg=L1(0.2)),
    lambda: make_lad(4, 2, seed=1),
    lambda: make_lasso(4, 2, seed=1, lam=0.3),
    lambda: make_hinge(4, 2, seed=1),
], ids=["quadratic", "ls_l1", "lad", "lasso", "hinge"])
def test_instance_text_roundtrip(maker):
    p = maker()
    text = io.problem_to_text(p)
    q = io.problem_from_text(text)
    assert q.n == p.n and q.d == p.d
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.standard_normal(p.d)
        assert p.objective_value(x) == q.objective_value(x)
        assert np.array_equal(full_gradient(p, x), full_gradient(q, x))
