"""Stepsize schedules eta_k for every supported rule.

Rules split into three families: smooth rules (constant in k, capped by
1/(4n*sqrt(2*Lbar*Lstar*(1+log K))) and tuned against the shuffling
variance at the optimum), Lipschitz rules (decaying, tuned by G-bar and
D), and the strongly-convex-regularizer rule m/(n*mu_psi*k).  All logs
are natural; (1 + log 1) = 1 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

RULES = (
    "smooth_convex_any",
    "smooth_convex_random",
    "smooth_strongly_any",
    "smooth_strongly_random",
    "lip_sqrt_k",
    "lip_sqrt_big_k",
    "lip_linear_decay",
    "lip_adaptive",
    "strongly_psi",
    "constant",
)


@dataclass
class ScheduleParams:
    """Problem and horizon constants a schedule may consume."""

    n: int
    K: int
    L_bar: float = 0.0
    L_star: float = 0.0
    G_bar: float = 0.0
    mu_f: float = 0.0
    mu_psi: float = 0.0
    sigma_any_sq: float = 0.0
    sigma_rand_sq: float = 0.0
    D: float = 0.0
    eta_free: Optional[float] = None
    m: int = 2
    c: float = 0.5
    delta: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("the horizon must satisfy K >= 2")
        if self.n < 1:
            raise ValueError("n must be positive")
        for name in ("L_bar", "L_star", "G_bar", "mu_f", "mu_psi",
                     "sigma_any_sq", "sigma_rand_sq", "D"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.sigma_rand_sq + 1e-12 * (1 + self.sigma_any_sq) < self.sigma_any_sq:
            raise ValueError("sigma_rand_sq cannot be below sigma_any_sq")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.r < 0:
            raise ValueError("r must be nonnegative")

    @property
    def mu_F(self) -> float:
        return self.mu_f + 2.0 * self.mu_psi


def _log_factor(k: int) -> float:
    return 1.0 + math.log(k)


def _smooth_cap(p: ScheduleParams) -> float:
    denom = 4.0 * p.n * math.sqrt(2.0 * p.L_bar * p.L_star * _log_factor(p.K))
    if denom <= 0:
        return math.inf
    return 1.0 / denom


def u_factor(p: ScheduleParams, variant: str) -> float:
    """The clamp u = max(1, log(mu_F^3 D^2 K^2 / (Lbar sigma^2 (1+log K)))).

    The "random" variant puts an extra factor n inside the log and uses
    the reshuffling variance.
    """
    if variant not in ("any", "random"):
        raise ValueError("variant must be 'any' or 'random'")
    if p.mu_F <= 0:
        raise ValueError("u factor requires mu_F > 0")
    sigma_sq = p.sigma_any_sq if variant == "any" else p.sigma_rand_sq
    if sigma_sq == 0 or p.L_bar == 0:
        return 1.0
    arg = p.mu_F**3 * p.D**2 * p.K**2 / (p.L_bar * sigma_sq * _log_factor(p.K))
    if variant == "random":
        arg *= p.n
    if arg <= 0:
        return 1.0
    return max(1.0, math.log(arg))


@dataclass
class StepsizeSchedule:
    rule: str
    params: ScheduleParams

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown stepsize rule {self.rule!r}")
        p = self.params
        if self.rule == "strongly_psi" and p.mu_psi <= 0:
            raise ValueError("the strongly_psi rule requires mu_psi > 0")
        if self.rule in ("smooth_strongly_any", "smooth_strongly_random") and p.mu_F <= 0:
            raise ValueError("smooth strongly-convex rules require mu_F > 0")
        if self.rule == "constant" and (p.eta_free is None or p.eta_free <= 0):
            raise ValueError("constant rule needs a positive eta_free")
        if self.rule == "lip_adaptive":
            if not (0.0 < p.c < 1.0):
                raise ValueError("adaptive rule requires 0 < c < 1")
            if p.delta <= 0:
                raise ValueError("adaptive rule requires delta > 0")
        # Adaptive running max of displacements, fed once per epoch.
        self._r_current = p.r
        self._adaptive_epochs = 0

    # -- adaptive state ----------------------------------------------------

    def update_adaptive_state(self, x_k: np.ndarray, x_1: np.ndarray) -> float:
        """Fold epoch k's displacement into the running radius r_k.

        Must be called exactly once per epoch, in epoch order, before
        eta_at(k) for the adaptive rule.  Returns the updated radius.
        """
        if self.rule != "lip_adaptive":
            raise ValueError("adaptive state applies only to the adaptive rule")
        disp = float(np.linalg.norm(np.asarray(x_k, dtype=float) - np.asarray(x_1, dtype=float)))
        self._r_current = max(self._r_current, disp)
        self._adaptive_epochs += 1
        return self._r_current

    @property
    def adaptive_radius(self) -> float:
        return self._r_current

    # -- the stepsize ------------------------------------------------------

    def eta_tilde(self, k: int) -> float:
        """Deterministic part of the adaptive stepsize (before the radius)."""
        p = self.params
        return p.c / (
            p.n * p.G_bar * math.sqrt(6.0 * (1.0 + 1.0 / p.delta) * k * _log_factor(k) ** (1.0 + p.delta))
        )

    def eta_at(self, k: int) -> float:
        p = self.params
        if k < 1:
            raise ValueError("epoch index must be >= 1")
        if self.rule != "lip_adaptive" and k > p.K:
            raise ValueError(f"epoch index {k} beyond horizon K={p.K}")

        if self.rule == "constant":
            return p.eta_free

        if self.rule == "smooth_convex_any":
            cap = _smooth_cap(p)
            if p.sigma_any_sq > 0 and p.L_bar > 0:
                branch = p.D ** (2.0 / 3.0) / (
                    p.n * (p.L_bar * p.sigma_any_sq * p.K * _log_factor(p.K)) ** (1.0 / 3.0)
                )
            else:
                branch = math.inf
            return min(cap, branch)

        if self.rule == "smooth_convex_random":
            cap = _smooth_cap(p)
            if p.sigma_rand_sq > 0 and p.L_bar > 0:
                branch = p.D ** (2.0 / 3.0) / (
                    (p.n**2 * p.L_bar * p.sigma_rand_sq * p.K * _log_factor(p.K)) ** (1.0 / 3.0)
                )
            else:
                branch = math.inf
            return min(cap, branch)

        if self.rule in ("smooth_strongly_any", "smooth_strongly_random"):
            variant = "any" if self.rule.endswith("any") else "random"
            cap_denom = max(
                4.0 * p.n * math.sqrt(2.0 * p.L_bar * p.L_star * _log_factor(p.K)),
                p.mu_psi,
            )
            cap = math.inf if cap_denom == 0 else 1.0 / cap_denom
            sigma_sq = p.sigma_any_sq if variant == "any" else p.sigma_rand_sq
            if sigma_sq == 0:
                return cap
            u = u_factor(p, variant)
            return min(cap, u / (p.n * p.mu_F * p.K))

        if self.rule == "lip_sqrt_k":
            eta = p.eta_free if p.eta_free is not None else p.D / (p.n * p.G_bar)
            return eta / math.sqrt(k)

        if self.rule == "lip_sqrt_big_k":
            eta = (
                p.eta_free
                if p.eta_free is not None
                else p.D / (p.n * p.G_bar * math.sqrt(_log_factor(p.K)))
            )
            return eta / math.sqrt(p.K)

        if self.rule == "lip_linear_decay":
            eta = p.eta_free if p.eta_free is not None else p.D / (p.n * p.G_bar)
            return eta * (p.K - k + 1) / p.K**1.5

        if self.rule == "lip_adaptive":
            if self._adaptive_epochs != k:
                raise ValueError(
                    f"adaptive state is current through epoch {self._adaptive_epochs}, "
                    f"but eta_at({k}) was requested"
                )
            return self._r_current * self.eta_tilde(k)

        if self.rule == "strongly_psi":
            return p.m / (p.n * p.mu_psi * k)

        raise AssertionError(f"unhandled rule {self.rule!r}")

    def describe(self) -> str:
        p = self.params
        extras = {
            "lip_adaptive": f" c={p.c!r} delta={p.delta!r} r={p.r!r}",
            "strongly_psi": f" m={p.m}",
            "constant": f" eta={p.eta_free!r}",
        }.get(self.rule, "")
        if self.rule.startswith("lip_") and self.rule != "lip_adaptive" and p.eta_free is not None:
            extras = f" eta={p.eta_free!r}"
        return self.rule + extras


@dataclass
class FeasibilityReport:
    ok: bool
    partial_sum: float
    budget: float
    series_bound: float
    near_threshold: bool
    message: str


def adaptive_feasibility(p: ScheduleParams, terms: int = 1_000_000) -> FeasibilityReport:
    """Check the adaptive rule's summability condition sum 6*Gbar^2*n^2*eta_tilde_k^2 <= c^2 < 1.

    With eta_tilde_k = c / (n*Gbar*sqrt(6*(1+1/delta)*k*(1+log k)^(1+delta)))
    the sum equals c^2/(1+1/delta) * sum 1/(k*(1+log k)^(1+delta)), so the
    check is independent of n and Gbar.  The analytic tail bound
    sum_{k>N} <= (1/delta)*(1+log N)^(-delta) extends the numeric partial
    sum to the full series.
    """
    if p.c >= 1.0:
        return FeasibilityReport(
            ok=False, partial_sum=math.nan, budget=p.c**2,
            series_bound=math.nan, near_threshold=False,
            message="rejected: the condition requires c < 1 strictly",
        )
    if p.c <= 0 or p.delta <= 0:
        return FeasibilityReport(
            ok=False, partial_sum=math.nan, budget=p.c**2,
            series_bound=math.nan, near_threshold=False,
            message="rejected: need c > 0 and delta > 0",
        )
    k = np.arange(1, terms + 1, dtype=float)
    series = float(np.sum(1.0 / (k * (1.0 + np.log(k)) ** (1.0 + p.delta))))
    scale = p.c**2 / (1.0 + 1.0 / p.delta)
    partial = scale * series
    tail = scale * (1.0 / p.delta) * (1.0 + math.log(terms)) ** (-p.delta)
    total = partial + tail
    budget = p.c**2
    ok = partial <= budget + 1e-15
    near = ok and total >= 0.95 * budget
    msg = "ok"
    if near:
        msg = "ok (near threshold: series bound within 5% of the budget)"
    if not ok:
        msg = "violated: partial sum exceeds c^2"
    return FeasibilityReport(
        ok=ok, partial_sum=partial, budget=budget,
        series_bound=total, near_threshold=near, message=msg,
    )


def gamma_weights(mu_psi: float, n: int, eta_sequence) -> np.ndarray:
    """gamma_k = eta_k * prod_{l=2..k} (1 + n*eta_{l-1}*mu_psi)."""
    etas = np.asarray(list(eta_sequence), dtype=float)
    if np.any(etas <= 0):
        raise ValueError("stepsizes must be positive")
    factors = 1.0 + n * mu_psi * etas[:-1]
    prods = np.concatenate([[1.0], np.cumprod(factors)])
    return etas * prods
