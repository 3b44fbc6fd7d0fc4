"""Epoch-structured proximal shuffling gradient method.

One epoch = n inner (sub)gradient steps taken in a permuted component
order, followed by a single prox step with the combined parameter n*eta_k.
The run returns the last iterate; the per-epoch trace records the gap,
squared distance to the optimum, and optional lemma diagnostics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .permutations import PermutationStrategy
from .problems import FiniteSumProblem, ReferenceSolution, grads_at
from .prox import prox_apply
from .schedules import StepsizeSchedule

OVERFLOW_LIMIT = 1e150

TRACE_HEADER = (
    "k,eta,gap,dist_sq,bregman,residual_R,displacement,descent_margin,wall_time_ns"
)


class NumericalAbort(RuntimeError):
    """Raised when an iterate overflows; carries the epoch index."""

    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass
class DiagnosticFlags:
    record_bregman: bool = False
    record_residual: bool = False
    check_descent: bool = False
    check_distance_recursion: bool = False
    record_average: bool = False
    record_iterates: bool = False
    timing: bool = False


@dataclass
class RunConfig:
    K: int
    x1: np.ndarray
    strategy: PermutationStrategy
    schedule: StepsizeSchedule
    diagnostics: DiagnosticFlags = field(default_factory=DiagnosticFlags)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("the horizon must satisfy K >= 2")
        self.x1 = np.asarray(self.x1, dtype=float)


@dataclass
class EpochRecord:
    k: int
    eta: float
    gap: float
    dist_sq: float
    bregman: Optional[float]
    residual_R: Optional[float]
    displacement: float
    descent_margin: Optional[float]
    wall_time_ns: int = 0

    def csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return ",".join(
            [
                str(self.k),
                fmt(self.eta),
                fmt(self.gap),
                fmt(self.dist_sq),
                fmt(self.bregman),
                fmt(self.residual_R),
                fmt(self.displacement),
                fmt(self.descent_margin),
                str(self.wall_time_ns),
            ]
        )


@dataclass
class Trace:
    records: list
    manifest: dict
    x_last: np.ndarray
    x_avg: Optional[np.ndarray] = None
    iterates: Optional[list] = None

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap

    def to_csv(self) -> str:
        lines = [TRACE_HEADER]
        lines.extend(r.csv_row() for r in self.records)
        return "\n".join(lines) + "\n"


def _check_finite(x: np.ndarray, epoch: int):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_LIMIT):
        raise NumericalAbort(epoch, "iterate overflow (|coordinate| > 1e150 or non-finite)")


def epoch_update(
    p: FiniteSumProblem,
    x_k: np.ndarray,
    eta_k: float,
    perm,
    keep_inner: bool = False,
    epoch: int = 0,
):
    """One epoch: n permuted inner steps, then a single prox.

    Returns (x_next, inner_iterates) where inner_iterates is the list
    [x_k^1, ..., x_k^n] of points at which component gradients were taken
    (None unless keep_inner is set).
    """
    if eta_k <= 0:
        raise ValueError("stepsize must be positive")
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(p.n)):
        raise ValueError("perm must be a bijection on the component indices")
    x = np.asarray(x_k, dtype=float).copy()
    inner = [] if keep_inner else None
    for idx in perm:
        if keep_inner:
            inner.append(x.copy())
        x -= eta_k * p.components[idx].grad(x)
        _check_finite(x, epoch)
    x_next = prox_apply(p.reg, eta_k, p.n, x)
    _check_finite(x_next, epoch)
    return x_next, inner


def descent_inequality_check(
    p: FiniteSumProblem,
    x_k: np.ndarray,
    x_next: np.ndarray,
    eta_k: float,
    perm,
    z: np.ndarray,
    inner_iterates,
) -> float:
    """Margin (RHS - LHS) of the per-epoch descent inequality at a point z.

    The inequality bounds F(x_{k+1}) - F(z) by quadratic distance terms
    plus component Bregman divergences evaluated at the retained inner
    iterates; it must hold for any z in dom psi, so the margin should be
    nonnegative up to roundoff.
    """
    if inner_iterates is None or len(inner_iterates) != p.n:
        raise ValueError("descent check needs the epoch's inner iterates")
    z = np.asarray(z, dtype=float)
    n, eta = p.n, eta_k
    F_next = p.objective_value(x_next)
    F_z = p.objective_value(z)
    if not (np.isfinite(F_next) and np.isfinite(F_z)):
        raise ValueError("descent check requires both points in dom psi")
    lhs = F_next - F_z
    rhs = float(np.sum((z - x_k) ** 2)) / (2.0 * n * eta)
    rhs -= (1.0 / eta + n * p.reg.mu_psi) * float(np.sum((z - x_next) ** 2)) / (2.0 * n)
    rhs -= float(np.sum((x_next - x_k) ** 2)) / (2.0 * n * eta)
    breg = 0.0
    for i, idx in enumerate(perm):
        c = p.components[idx]
        xi = inner_iterates[i]
        gi = c.grad(xi)
        vi = c.value(xi)
        b_next = c.value(x_next) - vi - float(np.dot(gi, x_next - xi))
        b_z = c.value(z) - vi - float(np.dot(gi, z - xi))
        breg += b_next - b_z
    rhs += breg / n
    return rhs - lhs


@dataclass
class DistanceCheckReport:
    ok: bool
    hypothesis_ok: bool
    worst_epoch: Optional[int]
    worst_violation: float
    message: str


def distance_recursion_check(trace: Trace, p: FiniteSumProblem, rel_tol: float = 1e-7) -> DistanceCheckReport:
    """Verify the per-epoch distance bound driven by the shuffling residuals.

    dist_sq at epoch k must not exceed D^2 discounted by the product of
    (1 + n*eta*mu_F) factors plus the accumulated 8*n*eta^3*R terms with
    the same discounting.  Applies under the smooth-stepsize hypothesis
    eta_k <= 1/(2n*sqrt(Lbar*Lstar)).
    """
    records = trace.records
    if any(r.residual_R is None for r in records):
        return DistanceCheckReport(False, False, None, math.nan,
                                   "trace lacks residual_R values")
    n = p.n
    mu_F = p.mu_f + 2.0 * p.reg.mu_psi
    cap = 1.0 / (2.0 * n * math.sqrt(p.L_bar * p.L_star))
    hypothesis_ok = all(r.eta <= cap * (1 + 1e-12) for r in records)
    if not hypothesis_ok:
        return DistanceCheckReport(False, False, None, math.nan,
                                   "stepsize exceeds the smooth-cap hypothesis")
    D_sq = float(trace.manifest["D"]) ** 2
    discounted = D_sq
    acc = 0.0
    worst = 0.0
    worst_epoch = None
    for rec in records:
        factor = 1.0 + n * rec.eta * mu_F
        discounted /= factor
        acc = acc / factor + 8.0 * n * rec.eta**3 * rec.residual_R / factor
        bound = discounted + acc
        violation = rec.dist_sq - bound
        scale = max(1.0, abs(bound))
        if violation / scale > worst:
            worst = violation / scale
            worst_epoch = rec.k
    ok = worst <= rel_tol
    msg = "ok" if ok else f"violated at epoch {worst_epoch} (relative excess {worst:.3e})"
    return DistanceCheckReport(ok, True, worst_epoch, worst, msg)


def _problem_digest(p: FiniteSumProblem) -> str:
    import hashlib

    h = hashlib.sha256()
    if p.data is not None:
        h.update(p.data.kind.encode())
        for key in sorted(p.data.arrays):
            h.update(key.encode())
            h.update(np.ascontiguousarray(np.atleast_1d(p.data.arrays[key])).tobytes())
    h.update(p.reg.spec_string().encode())
    return h.hexdigest()[:16]


def build_manifest(p: FiniteSumProblem, ref: ReferenceSolution, cfg: RunConfig, sigma) -> dict:
    man = {
        "format": "proxshuffle-manifest v1",
        "problem.kind": p.data.kind if p.data else "custom",
        "problem.n": p.n,
        "problem.d": p.d,
        "problem.digest": _problem_digest(p),
        "problem.reg": p.reg.spec_string(),
        "rng": "numpy PCG64, Fisher-Yates shuffle",
        "strategy": cfg.strategy.describe(),
        "schedule": cfg.schedule.describe(),
        "K": cfg.K,
        "mu_f": p.mu_f,
        "mu_psi": p.reg.mu_psi,
        "D": ref.D,
        "F_star": ref.F_star,
        "reference.method": ref.method,
        "reference.tolerance": ref.tolerance,
        "sigma_any_sq": sigma[0],
        "sigma_rand_sq": sigma[1],
    }
    if p.is_smooth:
        man["L_bar"] = p.L_bar
        man["L_star"] = p.L_star
    if all(c.lip_G is not None for c in p.components):
        man["G_bar"] = p.G_bar
    return man


def run(p: FiniteSumProblem, cfg: RunConfig, ref: ReferenceSolution) -> Trace:
    """Execute K epochs and return the trace (last iterate, never an average)."""
    diag = cfg.diagnostics
    x1 = cfg.x1
    if p.reg.member_residual(x1) > 1e-12:
        raise ValueError("the initial point must lie in dom psi")
    x = x1.copy()
    g_star = grads_at(p, ref.x_star)
    g_full_star = g_star.mean(axis=0)
    sigma_any = float(np.mean(np.sum(g_star**2, axis=1)))
    sigma_rand = sigma_any + p.n * float(np.sum(g_full_star**2))
    manifest = build_manifest(p, ref, cfg, (sigma_any, sigma_rand))
    L = np.array([c.smooth_L if c.smooth_L is not None else np.nan for c in p.components])

    records = []
    iterates = [x.copy()] if diag.record_iterates else None
    x_sum = np.zeros_like(x)
    sched = cfg.schedule
    need_inner = diag.check_descent
    for k in range(1, cfg.K + 1):
        t0 = time.perf_counter_ns() if diag.timing else 0
        if sched.rule == "lip_adaptive":
            sched.update_adaptive_state(x, x1)
        eta = sched.eta_at(k)
        perm = cfg.strategy.next_permutation(k)
        x_next, inner = epoch_update(p, x, eta, perm, keep_inner=need_inner, epoch=k)

        gap = p.objective_value(x_next) - ref.F_star
        dist_sq = float(np.sum((x_next - ref.x_star) ** 2))
        displacement = float(np.linalg.norm(x_next - x1))
        bregman = None
        if diag.record_bregman:
            bregman = p.f_value(x_next) - p.f_value(ref.x_star) - float(
                np.dot(g_full_star, x_next - ref.x_star)
            )
        residual = None
        if diag.record_residual:
            if np.any(np.isnan(L)):
                raise ValueError("residual recording needs smooth constants")
            prefix = np.cumsum(g_star[perm], axis=0)
            residual = float(
                np.sum(L[perm][1:] / p.n * np.sum(prefix[:-1] ** 2, axis=1))
            )
        margin = None
        if diag.check_descent:
            margin = descent_inequality_check(p, x, x_next, eta, perm, ref.x_star, inner)
        wall = (time.perf_counter_ns() - t0) if diag.timing else 0
        records.append(
            EpochRecord(
                k=k,
                eta=eta,
                gap=gap,
                dist_sq=dist_sq,
                bregman=bregman,
                residual_R=residual,
                displacement=displacement,
                descent_margin=margin,
                wall_time_ns=wall,
            )
        )
        x = x_next
        x_sum += x
        if diag.record_iterates:
            iterates.append(x.copy())

    trace = Trace(
        records=records,
        manifest=manifest,
        x_last=x,
        x_avg=(x_sum / cfg.K) if diag.record_average else None,
        iterates=iterates,
    )
    if diag.check_distance_recursion:
        report = distance_recursion_check(trace, p)
        trace.manifest["distance_recursion"] = report.message
    return trace
