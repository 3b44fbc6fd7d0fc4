"""Finite-sum convex problems F(x) = f(x) + psi(x), f = (1/n) sum f_i.

Component oracles carry a value, a (sub)gradient, and whichever constants
the problem class certifies: a smoothness constant L_i, a gradient bound
G_i, or both.  Generators cover the motivating instance families
(quadratics, least squares, LAD, lasso, hinge) with exact constants
computed from the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .prox import L1, Regularizer, SqL2, Zero, prox_apply


@dataclass(frozen=True)
class ComponentOracle:
    """One component f_i: value, (sub)gradient, and its constants.

    At least one of smooth_L (Lipschitz constant of the gradient) and
    lip_G (uniform bound on subgradient norms) must be present.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    smooth_L: Optional[float] = None
    lip_G: Optional[float] = None

    def __post_init__(self):
        if self.smooth_L is None and self.lip_G is None:
            raise ValueError("component needs smooth_L or lip_G")


@dataclass
class InstanceData:
    """Raw arrays behind a generated instance, kept for serialization
    and for building high-accuracy reference models."""

    kind: str
    arrays: dict


@dataclass
class FiniteSumProblem:
    components: list[ComponentOracle]
    reg: Regularizer
    mu_f: float
    d: int
    data: Optional[InstanceData] = None

    def __post_init__(self):
        if not self.components:
            raise ValueError("need at least one component")
        if self.mu_f > 0 and any(c.lip_G is not None for c in self.components):
            raise ValueError(
                "mu_f > 0 is incompatible with uniformly bounded gradients"
            )

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def L_bar(self) -> float:
        return float(np.mean([c.smooth_L for c in self.components]))

    @property
    def L_star(self) -> float:
        return float(max(c.smooth_L for c in self.components))

    @property
    def G_bar(self) -> float:
        return float(np.mean([c.lip_G for c in self.components]))

    @property
    def is_smooth(self) -> bool:
        return all(c.smooth_L is not None for c in self.components)

    def f_value(self, x: np.ndarray) -> float:
        return float(np.mean([c.value(x) for c in self.components]))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return full_gradient(self, x)

    def objective_value(self, x: np.ndarray) -> float:
        return objective_value(self, x)

    def bregman_f(self, x: np.ndarray, y: np.ndarray, grad_y=None) -> float:
        """B_f(x, y) = f(x) - f(y) - <grad f(y), x - y>."""
        if grad_y is None:
            grad_y = self.full_gradient(y)
        return self.f_value(x) - self.f_value(y) - float(np.dot(grad_y, x - y))


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    F_star: float
    D: float
    method: str  # "closed_form" or "high_accuracy_solver"
    tolerance: float


def full_gradient(p: FiniteSumProblem, x: np.ndarray) -> np.ndarray:
    """Average of the component (sub)gradients at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise ValueError(f"dimension mismatch: expected ({p.d},), got {x.shape}")
    g = np.zeros(p.d)
    for c in p.components:
        g += c.grad(x)
    return g / p.n


def objective_value(p: FiniteSumProblem, x: np.ndarray) -> float:
    """F(x) = f(x) + psi(x); +inf outside dom psi."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise ValueError(f"dimension mismatch: expected ({p.d},), got {x.shape}")
    psi = p.reg.value(x)
    if not np.isfinite(psi):
        return math.inf
    return p.f_value(x) + psi


def _quadratic_component(A: np.ndarray, b: np.ndarray) -> ComponentOracle:
    L = float(np.linalg.eigvalsh(A)[-1])
    return ComponentOracle(
        value=lambda x, A=A, b=b: 0.5 * float(x @ A @ x) - float(b @ x),
        grad=lambda x, A=A, b=b: A @ x - b,
        smooth_L=L,
    )


def make_quadratic(
    n: int,
    d: int,
    seed: int,
    mu_f_target: float = 0.0,
    reg: Regularizer | None = None,
    spread: float = 1.0,
) -> FiniteSumProblem:
    """Random components f_i(x) = x'A_i x / 2 - b_i'x with A_i symmetric PSD.

    Each A_i is mu_f_target*I plus a random PSD part with eigenvalues in
    [0, spread], so the averaged Hessian dominates mu_f_target*I.  L_i is
    the exact largest eigenvalue of A_i; mu_f is the exact smallest
    eigenvalue of the averaged Hessian.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if mu_f_target < 0:
        raise ValueError("mu_f_target must be nonnegative")
    rng = np.random.default_rng(seed)
    As, bs = [], []
    for _ in range(n):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eig = rng.uniform(0.0, spread, size=d)
        As.append(mu_f_target * np.eye(d) + (Q * eig) @ Q.T)
        bs.append(rng.standard_normal(d))
    comps = [_quadratic_component(A, b) for A, b in zip(As, bs)]
    A_avg = np.mean(As, axis=0)
    mu_f = float(np.linalg.eigvalsh(A_avg)[0])
    return FiniteSumProblem(
        components=comps,
        reg=reg or Zero(),
        mu_f=max(mu_f, 0.0),
        d=d,
        data=InstanceData("quadratic", {"A": np.array(As), "b": np.array(bs)}),
    )


def quadratic_from_arrays(As, bs, reg=None, mu_f=None) -> FiniteSumProblem:
    """Quadratic finite sum from explicit matrices (used by deserialization)."""
    As = [np.asarray(A, dtype=float) for A in As]
    bs = [np.asarray(b, dtype=float) for b in bs]
    comps = [_quadratic_component(A, b) for A, b in zip(As, bs)]
    if mu_f is None:
        mu_f = max(float(np.linalg.eigvalsh(np.mean(As, axis=0))[0]), 0.0)
    return FiniteSumProblem(
        components=comps,
        reg=reg or Zero(),
        mu_f=mu_f,
        d=len(bs[0]),
        data=InstanceData("quadratic", {"A": np.array(As), "b": np.array(bs)}),
    )


def _check_rows(A: np.ndarray):
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms == 0):
        raise ValueError("degenerate data: zero row")
    return norms


def _ls_components(A: np.ndarray, b: np.ndarray) -> list[ComponentOracle]:
    comps = []
    for a_i, b_i in zip(A, b):
        comps.append(
            ComponentOracle(
                value=lambda x, a=a_i, t=b_i: 0.5 * float(a @ x - t) ** 2,
                grad=lambda x, a=a_i, t=b_i: (float(a @ x) - t) * a,
                smooth_L=float(a_i @ a_i),
            )
        )
    return comps


def make_least_squares(
    n: int, d: int, seed: int, noise: float = 1.0, reg: Regularizer | None = None
) -> FiniteSumProblem:
    """f_i(x) = (a_i'x - b_i)^2 / 2, one data row per component."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x0 = rng.standard_normal(d)
    b = A @ x0 + noise * rng.standard_normal(n)
    return least_squares_from_arrays(A, b, reg)


def least_squares_from_arrays(A, b, reg=None) -> FiniteSumProblem:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_rows(A)
    H = (A.T @ A) / len(A)
    mu_f = max(float(np.linalg.eigvalsh(H)[0]), 0.0)
    return FiniteSumProblem(
        components=_ls_components(A, b),
        reg=reg or Zero(),
        mu_f=mu_f,
        d=A.shape[1],
        data=InstanceData("least_squares", {"A": A, "b": b}),
    )


def make_lad(
    n: int, d: int, seed: int, noise: float = 1.0, reg: Regularizer | None = None
) -> FiniteSumProblem:
    """Least absolute deviations: f_i(x) = |a_i'x - b_i|, G_i = ||a_i||.

    The subgradient at a kink (zero residual) is the zero vector.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x0 = rng.standard_normal(d)
    b = A @ x0 + noise * rng.standard_normal(n)
    return lad_from_arrays(A, b, reg)


def lad_from_arrays(A, b, reg=None) -> FiniteSumProblem:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    norms = _check_rows(A)
    comps = []
    for a_i, b_i, g_i in zip(A, b, norms):
        comps.append(
            ComponentOracle(
                value=lambda x, a=a_i, t=b_i: abs(float(a @ x) - t),
                grad=lambda x, a=a_i, t=b_i: np.sign(float(a @ x) - t) * a,
                lip_G=float(g_i),
            )
        )
    return FiniteSumProblem(
        components=comps,
        reg=reg or Zero(),
        mu_f=0.0,
        d=A.shape[1],
        data=InstanceData("lad", {"A": A, "b": b}),
    )


def make_lasso(n: int, d: int, seed: int, lam: float, noise: float = 1.0) -> FiniteSumProblem:
    """Smooth least-squares components with an l1 regularizer."""
    if lam < 0:
        raise ValueError("lasso weight must be nonnegative")
    reg = L1(lam) if lam > 0 else Zero()
    p = make_least_squares(n, d, seed, noise=noise, reg=reg)
    p.data.kind = "lasso"
    p.data.arrays["lam"] = lam
    return p


def make_hinge(
    n: int, d: int, seed: int, reg: Regularizer | None = None, margin_scale: float = 1.0
) -> FiniteSumProblem:
    """Hinge losses f_i(x) = max(0, 1 - y_i * a_i'x), G_i = ||a_i||.

    The subgradient at the kink (unit margin) is the zero vector.
    """
    rng = np.random.default_rng(seed)
    A = margin_scale * rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    y = np.where(A @ w + 0.3 * rng.standard_normal(n) >= 0, 1.0, -1.0)
    return hinge_from_arrays(A, y, reg)


def hinge_from_arrays(A, y, reg=None) -> FiniteSumProblem:
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    norms = _check_rows(A)
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("hinge labels must be +/-1")
    comps = []
    for a_i, y_i, g_i in zip(A, y, norms):
        comps.append(
            ComponentOracle(
                value=lambda x, a=a_i, s=y_i: max(0.0, 1.0 - s * float(a @ x)),
                grad=lambda x, a=a_i, s=y_i: (-s * a if 1.0 - s * float(a @ x) > 0 else np.zeros_like(a)),
                lip_G=float(g_i),
            )
        )
    return FiniteSumProblem(
        components=comps,
        reg=reg or Zero(),
        mu_f=0.0,
        d=A.shape[1],
        data=InstanceData("hinge", {"A": A, "y": y}),
    )


class ReferenceFailure(RuntimeError):
    """Raised when no reference of the requested accuracy could be produced."""


def _averaged_hessian_system(p: FiniteSumProblem):
    """(H, c) with f(x) = x'Hx/2 - c'x for quadratic-family instances."""
    data = p.data
    if data is None:
        return None
    if data.kind == "quadratic":
        H = np.mean(data.arrays["A"], axis=0)
        c = np.mean(data.arrays["b"], axis=0)
        return H, c
    if data.kind in ("least_squares", "lasso"):
        A, b = data.arrays["A"], data.arrays["b"]
        return (A.T @ A) / len(A), (A.T @ b) / len(A)
    return None


def _fista(p: FiniteSumProblem, x1: np.ndarray, tol: float, max_iter: int = 200_000):
    """Accelerated proximal gradient for smooth f + prox-friendly psi."""
    L = p.L_bar  # Lipschitz constant of grad f = average of component grads
    step = 1.0 / L
    x = np.asarray(x1, dtype=float).copy()
    z = x.copy()
    t = 1.0
    for _ in range(max_iter):
        g = p.full_gradient(z)
        x_new = prox_apply(p.reg, step, 1, z - step * g)
        res = float(np.linalg.norm(x_new - prox_apply(p.reg, step, 1, x_new - step * p.full_gradient(x_new)))) / step
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if res <= tol:
            return x, res
    raise ReferenceFailure(f"prox-gradient reference did not reach tol={tol}")


def _cvxpy_reference(p: FiniteSumProblem, tol: float):
    """High-accuracy reference for nonsmooth f via a disciplined convex model."""
    import cvxpy as cp

    data = p.data
    if data is None:
        raise ReferenceFailure("no structural data available for a solver model")
    x = cp.Variable(p.d)
    if data.kind == "lad":
        A, b = data.arrays["A"], data.arrays["b"]
        f = cp.sum(cp.abs(A @ x - b)) / len(A)
    elif data.kind == "hinge":
        A, y = data.arrays["A"], data.arrays["y"]
        f = cp.sum(cp.pos(1 - cp.multiply(y, A @ x))) / len(A)
    else:
        raise ReferenceFailure(f"no solver model for instance kind {data.kind!r}")
    reg = p.reg
    if isinstance(reg, Zero):
        psi = 0
    elif isinstance(reg, L1):
        psi = reg.lam * cp.norm1(x)
    elif isinstance(reg, SqL2):
        psi = 0.5 * reg.mu * cp.sum_squares(x - reg.center)
    else:
        raise ReferenceFailure(f"no solver model for regularizer {type(reg).__name__}")
    prob = cp.Problem(cp.Minimize(f + psi))
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal",):
        raise ReferenceFailure(f"reference solver status: {prob.status}")
    return np.asarray(x.value, dtype=float)


def compute_reference(
    p: FiniteSumProblem, x1: np.ndarray, tol: float | None = None
) -> ReferenceSolution:
    """Solve for (x*, F*) and record D = ||x* - x1||.

    Quadratic-family instances with zero or squared-l2 regularizers are
    solved in closed form; smooth instances with other regularizers by
    accelerated proximal gradient; nonsmooth instances by a high-accuracy
    convex solver.  Failure to certify the requested accuracy raises,
    never silently returns a poor reference.
    """
    x1 = np.asarray(x1, dtype=float)
    system = _averaged_hessian_system(p)
    smooth = p.is_smooth
    if tol is None:
        tol = 1e-10 if smooth else 1e-8

    if system is not None and isinstance(p.reg, (Zero, SqL2)):
        H, c = system
        if isinstance(p.reg, SqL2):
            mu, center = p.reg.mu, p.reg.center + np.zeros(p.d)
            x_star = np.linalg.solve(H + mu * np.eye(p.d), c + mu * center)
        else:
            # lstsq handles rank-deficient averages (min-norm solution)
            x_star = np.linalg.lstsq(H, c, rcond=None)[0]
        method = "closed_form"
        resid = float(np.linalg.norm(p.full_gradient(x_star)
                                     + (p.reg.mu * (x_star - p.reg.center) if isinstance(p.reg, SqL2) else 0.0)))
        if resid > max(tol, 1e-8):
            raise ReferenceFailure(f"closed-form residual {resid} exceeds tolerance")
    elif smooth:
        x_star, _ = _fista(p, x1, tol)
        method = "high_accuracy_solver"
        resid = p.reg.subdiff_distance(x_star, -p.full_gradient(x_star))
        if resid > 10 * tol:
            raise ReferenceFailure(f"prox-gradient residual {resid} exceeds tolerance")
    else:
        x_star = _cvxpy_reference(p, tol)
        method = "high_accuracy_solver"
        # Nonsmooth components: the chosen subgradient need not witness
        # optimality, so certify by direct function comparison instead.
        F_star = p.objective_value(x_star)
        rng = np.random.default_rng(0)
        for eps in (1e-4, 1e-3):
            for _ in range(50):
                u = rng.standard_normal(p.d)
                u /= np.linalg.norm(u)
                if p.objective_value(x_star + eps * u) < F_star - 1e-8:
                    raise ReferenceFailure("solver reference fails directional optimality")

    F_star = p.objective_value(x_star)
    return ReferenceSolution(
        x_star=x_star,
        F_star=float(F_star),
        D=float(np.linalg.norm(x_star - x1)),
        method=method,
        tolerance=tol,
    )


def grads_at(p: FiniteSumProblem, x: np.ndarray) -> np.ndarray:
    """Stacked component (sub)gradients at x, shape (n, d)."""
    return np.array([c.grad(np.asarray(x, dtype=float)) for c in p.components])
