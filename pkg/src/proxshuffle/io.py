"""Plain-text file formats: problem instances, manifests, and config files.

The instance format is versioned and line-oriented so experiments are
replayable from files alone.  All floats are written with repr (shortest
round-trip decimal), so serialize/deserialize is bit-exact.
"""

from __future__ import annotations

import numpy as np

from . import problems
from .prox import regularizer_from_spec

INSTANCE_HEADER = "proxshuffle-instance v1"


def _fmt_vec(v) -> str:
    return " ".join(repr(float(t)) for t in np.atleast_1d(v))


def problem_to_text(p: problems.FiniteSumProblem) -> str:
    if p.data is None:
        raise ValueError("only data-backed instances are serializable")
    kind = p.data.kind
    lines = [INSTANCE_HEADER, f"kind {kind}", f"n {p.n}", f"d {p.d}",
             f"reg {p.reg.spec_string()}"]
    arr = p.data.arrays
    if kind == "quadratic":
        for A, b in zip(arr["A"], arr["b"]):
            for row in A:
                lines.append("A " + _fmt_vec(row))
            lines.append("b " + _fmt_vec(b))
    elif kind in ("least_squares", "lasso", "lad"):
        for a, t in zip(arr["A"], arr["b"]):
            lines.append("row " + _fmt_vec(a) + " | " + repr(float(t)))
    elif kind == "hinge":
        for a, y in zip(arr["A"], arr["y"]):
            lines.append("row " + _fmt_vec(a) + " | " + repr(float(y)))
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    return "\n".join(lines) + "\n"


def problem_from_text(text: str) -> problems.FiniteSumProblem:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if lines[0] != INSTANCE_HEADER:
        raise ValueError(f"unrecognized instance header: {lines[0]!r}")
    meta = {}
    body = []
    for ln in lines[1:]:
        key, rest = ln.split(None, 1)
        if key in ("kind", "n", "d", "reg"):
            meta[key] = rest
        else:
            body.append((key, rest))
    kind = meta["kind"]
    n, d = int(meta["n"]), int(meta["d"])
    reg = regularizer_from_spec(meta["reg"])
    if kind == "quadratic":
        As, bs = [], []
        rows = []
        for key, rest in body:
            if key == "A":
                rows.append([float(v) for v in rest.split()])
            elif key == "b":
                As.append(np.array(rows))
                rows = []
                bs.append(np.array([float(v) for v in rest.split()]))
        if len(As) != n:
            raise ValueError("component count mismatch in instance file")
        return problems.quadratic_from_arrays(As, bs, reg=reg)
    A, targets = [], []
    for key, rest in body:
        if key != "row":
            raise ValueError(f"unexpected line key {key!r}")
        left, right = rest.split("|")
        A.append([float(v) for v in left.split()])
        targets.append(float(right))
    A = np.array(A)
    t = np.array(targets)
    if A.shape != (n, d):
        raise ValueError("data shape mismatch in instance file")
    if kind in ("least_squares", "lasso"):
        p = problems.least_squares_from_arrays(A, t, reg=reg)
        p.data.kind = kind
        return p
    if kind == "lad":
        return problems.lad_from_arrays(A, t, reg=reg)
    if kind == "hinge":
        return problems.hinge_from_arrays(A, t, reg=reg)
    raise ValueError(f"unknown instance kind {kind!r}")


def manifest_to_text(man: dict) -> str:
    lines = [f"{k} = {man[k]!r}" if isinstance(man[k], str) else f"{k} = {man[k]}" for k in man]
    return "\n".join(lines) + "\n"


def manifest_from_text(text: str) -> dict:
    man = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        key, val = ln.split("=", 1)
        val = val.strip()
        if val.startswith("'") and val.endswith("'"):
            parsed = val[1:-1]
        else:
            try:
                parsed = int(val)
            except ValueError:
                try:
                    parsed = float(val)
                except ValueError:
                    parsed = val
        man[key.strip()] = parsed
    return man
