"""Per-epoch permutation strategies.

Regimes: fresh uniform shuffle every epoch (RR), one uniform shuffle reused
forever (SO), a fixed deterministic order (IG), resampling every m epochs
(EveryM), and an explicit schedule read from a file (FixedSchedule).

Uniform sampling uses a Fisher-Yates shuffle driven by numpy's seeded PCG64
generator; the per-epoch draw is derived from (seed, draw index) so a
strategy is a pure function of its seed.  Permutations are 0-based
internally and 1-based in files and logs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _uniform_perm(seed: int, stream: int, n: int) -> np.ndarray:
    """Unbiased Fisher-Yates shuffle from a generator keyed by (seed, stream)."""
    rng = np.random.default_rng([seed, stream])
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _check_perm(perm: np.ndarray, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    if perm.shape != (n,) or sorted(perm.tolist()) != list(range(n)):
        raise ValueError(f"not a permutation of [{n}]: {perm}")
    return perm


class PermutationStrategy:
    """Base class.  next_permutation(k) must be called with increasing k."""

    n: int
    name: str

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n
        self._last_k = 0

    def next_permutation(self, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError("epoch index must be >= 1")
        if k <= self._last_k:
            raise ValueError(
                f"permutations must be consumed in increasing epoch order "
                f"(got k={k} after k={self._last_k})"
            )
        self._last_k = k
        return self._emit(k)

    def _emit(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def clone(self) -> "PermutationStrategy":
        """Fresh instance with the same configuration and reset epoch counter."""
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class RR(PermutationStrategy):
    """Random Reshuffle: fresh uniform permutation every epoch."""

    name = "rr"

    def __init__(self, n: int, seed: int):
        super().__init__(n)
        self.seed = int(seed)

    def _emit(self, k):
        return _uniform_perm(self.seed, k, self.n)

    def clone(self):
        return RR(self.n, self.seed)

    def describe(self):
        return f"rr seed={self.seed}"


class SO(PermutationStrategy):
    """Shuffle Once: a single uniform permutation reused every epoch."""

    name = "so"

    def __init__(self, n: int, seed: int):
        super().__init__(n)
        self.seed = int(seed)
        self._perm = _uniform_perm(self.seed, 0, n)

    def _emit(self, k):
        return self._perm.copy()

    def clone(self):
        return SO(self.n, self.seed)

    def describe(self):
        return f"so seed={self.seed}"


class IG(PermutationStrategy):
    """Incremental Gradient: a fixed deterministic order every epoch."""

    name = "ig"

    def __init__(self, order):
        order = np.asarray(order, dtype=int)
        super().__init__(len(order))
        self._order = _check_perm(order, len(order))

    def _emit(self, k):
        return self._order.copy()

    def clone(self):
        return IG(self._order)

    def describe(self):
        return "ig order=" + ",".join(str(i + 1) for i in self._order)


class EveryM(PermutationStrategy):
    """Resample a uniform permutation every m epochs, reuse in between.

    m=1 behaves like RR; m=None (the "infinity" sentinel) behaves like SO.
    """

    name = "every_m"

    def __init__(self, n: int, m, seed: int):
        super().__init__(n)
        if m is not None and (m != math.inf) and m < 1:
            raise ValueError("resample period m must be >= 1")
        self.m = None if (m is None or m == math.inf) else int(m)
        self.seed = int(seed)

    def _emit(self, k):
        block = 0 if self.m is None else (k - 1) // self.m
        return _uniform_perm(self.seed, block, self.n)

    def clone(self):
        return EveryM(self.n, self.m, self.seed)

    def describe(self):
        m_txt = "inf" if self.m is None else str(self.m)
        return f"every_m m={m_txt} seed={self.seed}"


class FixedSchedule(PermutationStrategy):
    """Explicit list of permutations, one per epoch; exhausting it fails."""

    name = "fixed"

    def __init__(self, perms):
        perms = [np.asarray(p, dtype=int) for p in perms]
        if not perms:
            raise ValueError("fixed schedule needs at least one permutation")
        super().__init__(len(perms[0]))
        self._perms = [_check_perm(p, self.n) for p in perms]

    @classmethod
    def from_file(cls, path) -> "FixedSchedule":
        """Read one 1-based permutation per line, whitespace separated."""
        perms = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                perms.append([int(v) - 1 for v in line.split()])
        return cls(perms)

    def _emit(self, k):
        if k > len(self._perms):
            raise ValueError(
                f"fixed schedule exhausted: epoch {k} requested, "
                f"{len(self._perms)} permutations available"
            )
        return self._perms[k - 1].copy()

    def clone(self):
        return FixedSchedule(self._perms)

    def describe(self):
        return f"fixed epochs={len(self._perms)}"


def all_permutations(n: int) -> list[tuple[int, ...]]:
    """All n! permutations of range(n) in lexicographic order (n <= 8)."""
    if n > 8:
        raise ValueError("exhaustive enumeration limited to n <= 8")
    if n < 1:
        raise ValueError("n must be positive")
    return list(itertools.permutations(range(n)))
