"""Shuffling-uncertainty measures, brute-force permutation oracles, the
algebraic recursion checker, rate fitting, and the cocoercivity scan."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .permutations import all_permutations
from .problems import FiniteSumProblem, ReferenceSolution, grads_at


@dataclass
class SigmaReport:
    sigma_any_sq: float
    sigma_rand_sq: float
    grad_f_star_norm_sq: float
    n: int


def sigma_report(p: FiniteSumProblem, ref: ReferenceSolution) -> SigmaReport:
    """Shuffling-variance measures at the optimum.

    sigma_any_sq = (1/n) * sum_i ||grad f_i(x*)||^2 and
    sigma_rand_sq = sigma_any_sq + n * ||grad f(x*)||^2 by definition.
    """
    g = grads_at(p, ref.x_star)
    any_sq = float(np.mean(np.sum(g**2, axis=1)))
    full = g.mean(axis=0)
    full_sq = float(np.sum(full**2))
    return SigmaReport(
        sigma_any_sq=any_sq,
        sigma_rand_sq=any_sq + p.n * full_sq,
        grad_f_star_norm_sq=full_sq,
        n=p.n,
    )


def residual_R(p: FiniteSumProblem, perm, x_star, grads=None) -> float:
    """Permutation residual sum_{i=2..n} (L_{perm_i}/n) * ||prefix gradient||^2."""
    if not p.is_smooth:
        raise ValueError("the residual requires smooth constants L_i")
    if grads is None:
        grads = grads_at(p, x_star)
    perm = np.asarray(perm, dtype=int)
    L = np.array([p.components[i].smooth_L for i in perm])
    prefix = np.cumsum(grads[perm], axis=0)
    if p.n == 1:
        return 0.0
    return float(np.sum(L[1:] / p.n * np.sum(prefix[:-1] ** 2, axis=1)))


@dataclass
class ResidualStats:
    max: float
    mean: float
    count: int


def residual_stats_bruteforce(p: FiniteSumProblem, x_star) -> ResidualStats:
    """Exact max and mean of the residual over all n! permutations (n <= 8)."""
    grads = grads_at(p, x_star)
    perms = all_permutations(p.n)
    vals = [residual_R(p, perm, x_star, grads=grads) for perm in perms]
    return ResidualStats(max=float(np.max(vals)), mean=float(np.mean(vals)), count=len(vals))


@dataclass
class RecursionReport:
    ok: bool
    vacuous_from: Optional[int]
    worst_rel_violation: float
    message: str


def lemma_ineq_verify(a: float, b: float, c: float, K: int, rel_tol: float = 1e-9) -> RecursionReport:
    """Check the algebraic recursion bound on its extremal sequence.

    Builds d_{k+1} = a/k + b(1+log k) + c * sum_{l=2..k} d_l/(k-l+2)
    (the hypothesis with equality) and verifies
    d_{k+1} <= (a/k + b(1+log k)) * sum_{i=0..k-1} (2c(1+log k))^i
    for every k in [K].  When the geometric envelope overflows float64
    the bound is vacuously true and reported as such, not as a failure.
    """
    if a <= 0 or b <= 0 or c <= 0:
        raise ValueError("a, b, c must be positive")
    if K > 2000:
        raise ValueError("K limited to 2000 (quadratic cost)")
    d = np.zeros(K + 2)  # d[k] = d_k, indices 2..K+1 used
    worst = 0.0
    vacuous_from = None
    with np.errstate(over="ignore"):
        for k in range(1, K + 1):
            base = a / k + b * (1.0 + math.log(k))
            conv = float(np.dot(d[2 : k + 1], 1.0 / (k - np.arange(2, k + 1) + 2.0)))
            d[k + 1] = base + c * conv
            q = 2.0 * c * (1.0 + math.log(k))
            if q == 1.0:
                envelope = float(k)
            else:
                envelope = float((np.float64(q) ** k - 1.0) / (q - 1.0))
            bound = base * envelope
            if not (np.isfinite(bound) and np.isfinite(d[k + 1])):
                if vacuous_from is None:
                    vacuous_from = k
                continue
            rel = (d[k + 1] - bound) / max(1.0, abs(bound))
            worst = max(worst, rel)
    ok = worst <= rel_tol
    if vacuous_from is not None:
        msg = f"bound vacuous from k={vacuous_from} (float64 overflow)"
    else:
        msg = "ok" if ok else f"violated (worst relative excess {worst:.3e})"
    return RecursionReport(ok=ok, vacuous_from=vacuous_from, worst_rel_violation=worst, message=msg)


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: list
    dropped: int = 0


def estimate_rate(sweep) -> RateFit:
    """Ordinary least squares of log(final gap) on log(K).

    Points with nonpositive gaps are dropped (and counted); at least four
    usable points are required for a meaningful slope.
    """
    pts = [(float(K), float(g)) for K, g in sweep]
    usable = [(math.log(K), math.log(g)) for K, g in pts if g > 0]
    dropped = len(pts) - len(usable)
    if len(usable) < 4:
        raise ValueError("rate fit needs at least 4 points with positive gaps")
    xs = np.array([u[0] for u in usable])
    ys = np.array([u[1] for u in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        points=usable,
        dropped=dropped,
    )


@dataclass
class CocoercivityReport:
    ok: bool
    worst_lower_margin: float
    worst_upper_margin: float
    pairs: int


def cocoercivity_scan(
    p: FiniteSumProblem, pairs: int = 1000, seed: int = 0, rel_tol: float = 1e-9, scale: float = 1.0
) -> CocoercivityReport:
    """Check both smooth-convex inequalities on random pairs per component:

    ||grad(x)-grad(y)||^2 / (2 L_i) <= B_i(x, y) <= (L_i/2) ||x-y||^2.

    Margins are relative to 1 + the magnitude of the bounding side; the
    worst margins over all pairs and components are reported.
    """
    if not p.is_smooth:
        raise ValueError("cocoercivity applies to smooth components")
    rng = np.random.default_rng(seed)
    worst_lo = math.inf
    worst_hi = math.inf
    for comp in p.components:
        L = comp.smooth_L
        X = scale * rng.standard_normal((pairs, p.d))
        Y = scale * rng.standard_normal((pairs, p.d))
        for x, y in zip(X, Y):
            gx, gy = comp.grad(x), comp.grad(y)
            breg = comp.value(x) - comp.value(y) - float(np.dot(gy, x - y))
            lower = float(np.sum((gx - gy) ** 2)) / (2.0 * L) if L > 0 else 0.0
            upper = 0.5 * L * float(np.sum((x - y) ** 2))
            worst_lo = min(worst_lo, (breg - lower) / (1.0 + abs(breg)))
            worst_hi = min(worst_hi, (upper - breg) / (1.0 + abs(upper)))
    ok = worst_lo >= -rel_tol and worst_hi >= -rel_tol
    return CocoercivityReport(ok=ok, worst_lower_margin=worst_lo, worst_upper_margin=worst_hi, pairs=pairs)
