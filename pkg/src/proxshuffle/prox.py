"""Closed-form proximal operators for the supported regularizers.

Every regularizer here admits an exact prox, so the epoch-level update
``argmin_x n*psi(x) + ||x - y||^2 / (2*eta)`` can be evaluated without an
inner solve.  The prox parameter is the product ``s = n*eta``; the public
functions take ``(eta, n)`` separately to mirror the update rule literally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def soft_threshold(v: np.ndarray, thresh: float) -> np.ndarray:
    """Coordinate-wise soft threshold: shrink toward 0 by `thresh`."""
    return np.maximum(0.0, v - thresh) - np.maximum(0.0, -v - thresh)


class Regularizer:
    """Base class: a proper, closed, convex psi with an exact prox.

    Subclasses implement ``value``, ``_prox`` (with the combined parameter
    s = n*eta) and ``subdiff_distance`` (distance of a candidate vector
    from the subdifferential of psi at a point, used by test oracles).
    ``mu_psi`` is the certified strong-convexity modulus.
    """

    mu_psi: float = 0.0

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _prox(self, y: np.ndarray, s: float) -> np.ndarray:
        raise NotImplementedError

    def subdiff_distance(self, x: np.ndarray, g: np.ndarray) -> float:
        raise NotImplementedError

    def member_residual(self, x: np.ndarray) -> float:
        """Distance of x from dom psi (0 unless psi is an indicator)."""
        return 0.0

    def spec_string(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Regularizer):
    """psi = 0: prox is the identity."""

    def value(self, x):
        return 0.0

    def _prox(self, y, s):
        return y.copy()

    def subdiff_distance(self, x, g):
        return float(np.linalg.norm(g))

    def spec_string(self):
        return "zero"


@dataclass(frozen=True)
class L1(Regularizer):
    """psi(x) = lam * ||x||_1."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("L1 weight must be positive")

    def value(self, x):
        return self.lam * float(np.abs(x).sum())

    def _prox(self, y, s):
        return soft_threshold(y, s * self.lam)

    def subdiff_distance(self, x, g):
        # On nonzero coords the subgradient is lam*sign(x); on zeros it is
        # the interval [-lam, lam].
        res = np.where(
            x > 0,
            g - self.lam,
            np.where(x < 0, g + self.lam, np.maximum(0.0, np.abs(g) - self.lam)),
        )
        return float(np.linalg.norm(res))

    def spec_string(self):
        return f"l1 {self.lam!r}"


@dataclass(frozen=True)
class SqL2(Regularizer):
    """psi(x) = (mu/2) * ||x - center||^2; strongly convex with modulus mu."""

    mu: float
    center: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("SqL2 modulus must be positive")
        object.__setattr__(self, "mu_psi", float(self.mu))

    def value(self, x):
        return 0.5 * self.mu * float(np.sum((x - self.center) ** 2))

    def _prox(self, y, s):
        return (y + s * self.mu * (self.center + np.zeros_like(y))) / (1.0 + s * self.mu)

    def subdiff_distance(self, x, g):
        return float(np.linalg.norm(g - self.mu * (x - self.center)))

    def spec_string(self):
        c = self.center
        c_repr = repr(float(c)) if np.isscalar(c) else " ".join(repr(float(v)) for v in c)
        return f"sql2 {self.mu!r} {c_repr}"


@dataclass(frozen=True)
class BallIndicator(Regularizer):
    """Indicator of the Euclidean ball {x : ||x - center|| <= radius}."""

    radius: float
    center: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def value(self, x):
        return 0.0 if self.member_residual(x) <= 1e-12 else np.inf

    def _prox(self, y, s):
        v = y - self.center
        nrm = float(np.linalg.norm(v))
        if nrm <= self.radius:
            return y.copy()
        return self.center + v * (self.radius / nrm)

    def member_residual(self, x):
        return max(0.0, float(np.linalg.norm(x - self.center)) - self.radius)

    def subdiff_distance(self, x, g):
        if self.member_residual(x) > 1e-12:
            return np.inf
        v = x - self.center
        nrm = float(np.linalg.norm(v))
        if nrm < self.radius * (1.0 - 1e-12):
            return float(np.linalg.norm(g))
        # Boundary: normal cone is the outward ray {t*v : t >= 0}.
        t = max(0.0, float(np.dot(g, v)) / (nrm * nrm))
        return float(np.linalg.norm(g - t * v))

    def spec_string(self):
        c = self.center
        c_repr = repr(float(c)) if np.isscalar(c) else " ".join(repr(float(v)) for v in c)
        return f"ball {self.radius!r} {c_repr}"


@dataclass(frozen=True)
class BoxIndicator(Regularizer):
    """Indicator of the box {x : lo <= x <= hi} (coordinate-wise)."""

    lo: float | np.ndarray
    hi: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
            raise ValueError("box bounds require lo <= hi per coordinate")

    def value(self, x):
        return 0.0 if self.member_residual(x) <= 1e-12 else np.inf

    def _prox(self, y, s):
        return np.minimum(np.maximum(y, self.lo), self.hi)

    def member_residual(self, x):
        clip = np.minimum(np.maximum(x, self.lo), self.hi)
        return float(np.linalg.norm(x - clip))

    def subdiff_distance(self, x, g):
        if self.member_residual(x) > 1e-12:
            return np.inf
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), x.shape)
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), x.shape)
        # Normal cone per coordinate: (-inf,0] at lo, [0,inf) at hi, {0} inside.
        res = np.where(
            np.isclose(x, lo) & np.isclose(x, hi),
            0.0,
            np.where(
                np.isclose(x, lo),
                np.maximum(0.0, g),
                np.where(np.isclose(x, hi), np.maximum(0.0, -g), np.abs(g)),
            ),
        )
        return float(np.linalg.norm(res))

    def spec_string(self):
        def fmt(v):
            return repr(float(v)) if np.isscalar(v) else " ".join(repr(float(t)) for t in v)

        return f"box {fmt(self.lo)} | {fmt(self.hi)}"


@dataclass(frozen=True)
class ElasticNet(Regularizer):
    """psi(x) = lam*||x||_1 + (mu/2)*||x||^2; strongly convex with modulus mu.

    Prox: soft-threshold at s*lam, then shrink by 1/(1+s*mu).
    """

    lam: float
    mu: float

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("elastic-net weights must be positive")
        object.__setattr__(self, "mu_psi", float(self.mu))

    def value(self, x):
        return self.lam * float(np.abs(x).sum()) + 0.5 * self.mu * float(np.sum(x * x))

    def _prox(self, y, s):
        return soft_threshold(y, s * self.lam) / (1.0 + s * self.mu)

    def subdiff_distance(self, x, g):
        return L1(self.lam).subdiff_distance(x, g - self.mu * x)

    def spec_string(self):
        return f"elasticnet {self.lam!r} {self.mu!r}"


def prox_apply(reg: Regularizer, eta: float, n: int, y: np.ndarray) -> np.ndarray:
    """Exact minimizer of n*psi(x) + ||x - y||^2 / (2*eta)."""
    if eta <= 0:
        raise ValueError("prox stepsize must be positive")
    if not np.all(np.isfinite(y)):
        raise ValueError("prox input must be finite")
    return reg._prox(np.asarray(y, dtype=float), eta * n)


def psi_subgradient_from_prox(
    reg: Regularizer, eta: float, n: int, y: np.ndarray, x_next: np.ndarray
) -> np.ndarray:
    """The subgradient of psi at x_next implied by the prox optimality condition.

    From 0 in n*d(psi)(x) + (x - y)/eta at x = x_next, the vector
    (y - x_next)/(n*eta) lies in the subdifferential of psi at x_next.
    """
    x_check = prox_apply(reg, eta, n, y)
    if float(np.linalg.norm(x_check - np.asarray(x_next, dtype=float))) > 1e-9 * (
        1.0 + float(np.linalg.norm(x_check))
    ):
        raise ValueError("x_next is not the prox of y at this stepsize")
    return (np.asarray(y, dtype=float) - x_next) / (n * eta)


def prox_optimality_residual(
    reg: Regularizer, eta: float, n: int, y: np.ndarray, x: np.ndarray
) -> float:
    """Magnitude of the first-order condition 0 in n*d(psi)(x) + (x-y)/eta.

    Zero exactly when x = prox_apply(reg, eta, n, y); positive otherwise.
    """
    x = np.asarray(x, dtype=float)
    g = (np.asarray(y, dtype=float) - x) / (n * eta)
    infeas = reg.member_residual(x)
    if infeas > 0:
        return np.inf
    return reg.subdiff_distance(x, g)


_SPEC_PARSERS = {}


def regularizer_from_spec(text: str) -> Regularizer:
    """Parse a regularizer from its plain-text spec string."""
    parts = text.split()
    kind = parts[0].lower()
    if kind == "zero":
        return Zero()
    if kind == "l1":
        return L1(float(parts[1]))
    if kind == "sql2":
        vals = [float(v) for v in parts[1:]]
        center = vals[1] if len(vals) == 2 else np.array(vals[1:])
        return SqL2(vals[0], center)
    if kind == "ball":
        vals = [float(v) for v in parts[1:]]
        center = vals[1] if len(vals) == 2 else np.array(vals[1:])
        return BallIndicator(vals[0], center)
    if kind == "box":
        lo_txt, hi_txt = text.split(None, 1)[1].split("|")
        lo = [float(v) for v in lo_txt.split()]
        hi = [float(v) for v in hi_txt.split()]
        lo = lo[0] if len(lo) == 1 else np.array(lo)
        hi = hi[0] if len(hi) == 1 else np.array(hi)
        return BoxIndicator(lo, hi)
    if kind == "elasticnet":
        return ElasticNet(float(parts[1]), float(parts[2]))
    raise ValueError(f"unknown regularizer spec: {text!r}")
