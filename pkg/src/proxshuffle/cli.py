"""Command-line harness: configure, run, sweep, verify, and fit rates.

Config files are INI-style nested key-value text; any value can be
overridden on the command line with ``--set section.key=value``.  All
randomness flows from exactly two named seeds: the problem seed
(problem.seed) and the permutation seed (strategy.seed), both recorded in
the manifest.

Exit codes: 0 ok, 1 spec error, 2 numerical abort, 3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, io, optimizer, permutations, problems, schedules
from .prox import Zero, regularizer_from_spec

EXIT_OK = 0
EXIT_SPEC = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3


class SpecError(ValueError):
    pass


# -- config handling -------------------------------------------------------


def load_config(path: str | None, overrides) -> dict:
    """Read the nested key-value config and apply --set overrides."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (K vs k)
    if path is not None:
        if not os.path.exists(path):
            raise SpecError(f"config file not found: {path}")
        cp.read(path)
    cfg = {s: dict(cp[s]) for s in cp.sections()}
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise SpecError(f"override must look like section.key=value: {item!r}")
        key, val = item.split("=", 1)
        section, name = key.split(".", 1)
        cfg.setdefault(section, {})[name.strip()] = val.strip()
    return cfg


def _get(cfg, section, key, default=None, cast=str):
    try:
        raw = cfg[section][key]
    except KeyError:
        if default is None and cast is not str:
            return None
        return default
    if cast is bool:
        return str(raw).lower() in ("1", "true", "yes", "on")
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"bad value for {section}.{key}: {raw!r}") from exc


def _int_list(raw: str) -> list[int]:
    return [int(v) for v in str(raw).replace(",", " ").split()]


# -- building blocks -------------------------------------------------------


def build_problem(cfg) -> problems.FiniteSumProblem:
    sect = cfg.get("problem", {})
    kind = sect.get("kind")
    if kind is None:
        raise SpecError("problem.kind is required")
    reg = None
    if "reg" in sect:
        reg = regularizer_from_spec(sect["reg"])
    if kind == "file":
        path = sect.get("file")
        if not path or not os.path.exists(path):
            raise SpecError(f"problem file not found: {path!r}")
        with open(path) as fh:
            return io.problem_from_text(fh.read())
    n = _get(cfg, "problem", "n", cast=int)
    d = _get(cfg, "problem", "d", cast=int)
    seed = _get(cfg, "problem", "seed", default=0, cast=int)
    if n is None or d is None:
        raise SpecError("generator problems need problem.n and problem.d")
    if kind == "quadratic":
        return problems.make_quadratic(
            n, d, seed,
            mu_f_target=_get(cfg, "problem", "mu_f", default=0.0, cast=float),
            reg=reg,
            spread=_get(cfg, "problem", "spread", default=1.0, cast=float),
        )
    if kind == "least_squares":
        return problems.make_least_squares(
            n, d, seed, noise=_get(cfg, "problem", "noise", default=1.0, cast=float), reg=reg
        )
    if kind == "lad":
        return problems.make_lad(
            n, d, seed, noise=_get(cfg, "problem", "noise", default=1.0, cast=float), reg=reg
        )
    if kind == "lasso":
        return problems.make_lasso(
            n, d, seed,
            lam=_get(cfg, "problem", "lam", default=0.1, cast=float),
            noise=_get(cfg, "problem", "noise", default=1.0, cast=float),
        )
    if kind == "hinge":
        return problems.make_hinge(n, d, seed, reg=reg)
    raise SpecError(f"unknown problem kind {kind!r}")


def build_x1(cfg, p) -> np.ndarray:
    raw = cfg.get("problem", {}).get("x1", "zeros")
    if raw == "zeros":
        return np.zeros(p.d)
    vals = [float(v) for v in str(raw).split()]
    if len(vals) != p.d:
        raise SpecError(f"x1 needs {p.d} coordinates")
    return np.array(vals)


def build_strategy(cfg, n: int) -> permutations.PermutationStrategy:
    sect = cfg.get("strategy", {})
    kind = sect.get("kind", "rr")
    seed = _get(cfg, "strategy", "seed", default=0, cast=int)
    if kind == "rr":
        return permutations.RR(n, seed)
    if kind == "so":
        return permutations.SO(n, seed)
    if kind == "ig":
        order_raw = sect.get("order")
        if order_raw is None:
            order = list(range(n))
        else:
            order = [int(v) - 1 for v in _int_list(order_raw)]  # 1-based in config
        return permutations.IG(order)
    if kind == "every_m":
        m_raw = sect.get("m", "1")
        m = math.inf if m_raw in ("inf", "infinity") else int(m_raw)
        return permutations.EveryM(n, m, seed)
    if kind == "fixed":
        path = sect.get("file")
        if not path or not os.path.exists(path):
            raise SpecError(f"fixed-schedule file not found: {path!r}")
        return permutations.FixedSchedule.from_file(path)
    raise SpecError(f"unknown strategy kind {kind!r}")


def build_schedule(cfg, p, ref, sig, K: int) -> schedules.StepsizeSchedule:
    sect = cfg.get("schedule", {})
    rule = sect.get("rule")
    if rule is None:
        raise SpecError("schedule.rule is required")
    smooth = p.is_smooth
    lipsch = all(c.lip_G is not None for c in p.components)
    params = schedules.ScheduleParams(
        n=p.n,
        K=K,
        L_bar=p.L_bar if smooth else 0.0,
        L_star=p.L_star if smooth else 0.0,
        G_bar=p.G_bar if lipsch else 0.0,
        mu_f=p.mu_f,
        mu_psi=p.reg.mu_psi,
        sigma_any_sq=_get(cfg, "schedule", "sigma_any_sq", default=sig.sigma_any_sq, cast=float),
        sigma_rand_sq=_get(cfg, "schedule", "sigma_rand_sq", default=sig.sigma_rand_sq, cast=float),
        D=_get(cfg, "schedule", "D", default=ref.D, cast=float),
        eta_free=_get(cfg, "schedule", "eta", cast=float),
        m=_get(cfg, "schedule", "m", default=2, cast=int),
        c=_get(cfg, "schedule", "c", default=0.5, cast=float),
        delta=_get(cfg, "schedule", "delta", default=1.0, cast=float),
        r=_get(cfg, "schedule", "r", default=1.0, cast=float),
    )
    try:
        return schedules.StepsizeSchedule(rule, params)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


def build_diagnostics(cfg) -> optimizer.DiagnosticFlags:
    raw = cfg.get("run", {}).get("diagnostics", "")
    names = {v.strip() for v in raw.replace(",", " ").split() if v.strip()}
    known = {"bregman", "residual", "descent", "distance", "average", "iterates", "timing"}
    unknown = names - known
    if unknown:
        raise SpecError(f"unknown diagnostics: {sorted(unknown)}")
    return optimizer.DiagnosticFlags(
        record_bregman="bregman" in names,
        record_residual="residual" in names or "distance" in names,
        check_descent="descent" in names,
        check_distance_recursion="distance" in names,
        record_average="average" in names,
        record_iterates="iterates" in names,
        timing="timing" in names,
    )


def _prepare_outdir(path: str, force: bool):
    if os.path.exists(path) and os.listdir(path) and not force:
        raise SpecError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def _single_run(cfg, K: int, perm_seed: int | None = None):
    """Build everything from config and execute one run."""
    p = build_problem(cfg)
    x1 = build_x1(cfg, p)
    ref = problems.compute_reference(p, x1)
    sig = analysis.sigma_report(p, ref)
    if perm_seed is not None:
        cfg = {s: dict(v) for s, v in cfg.items()}
        cfg.setdefault("strategy", {})["seed"] = str(perm_seed)
    strategy = build_strategy(cfg, p.n)
    schedule = build_schedule(cfg, p, ref, sig, K)
    run_cfg = optimizer.RunConfig(
        K=K, x1=x1, strategy=strategy, schedule=schedule, diagnostics=build_diagnostics(cfg)
    )
    trace = optimizer.run(p, run_cfg, ref)
    trace.manifest["seeds.problem"] = cfg.get("problem", {}).get("seed", "0")
    trace.manifest["seeds.permutation"] = cfg.get("strategy", {}).get("seed", "0")
    return p, trace


# -- subcommands -----------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    K = _get(cfg, "run", "K", cast=int)
    if K is None:
        raise SpecError("run.K is required")
    if K < 2:
        raise SpecError(f"run.K = {K}: the horizon must satisfy K >= 2")
    out = cfg.get("run", {}).get("out", args.out or "out")
    force = args.force or _get(cfg, "run", "force", default=False, cast=bool)
    _prepare_outdir(out, force)
    try:
        p, trace = _single_run(cfg, K)
    except optimizer.NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    with open(os.path.join(out, "trace.csv"), "w") as fh:
        fh.write(trace.to_csv())
    with open(os.path.join(out, "manifest.txt"), "w") as fh:
        fh.write(io.manifest_to_text(trace.manifest))
    if p.data is not None:
        with open(os.path.join(out, "instance.txt"), "w") as fh:
            fh.write(io.problem_to_text(p))
    print(f"wrote {out}/trace.csv ({K} epochs), final gap {trace.final_gap:.6e}")
    return EXIT_OK


def _sweep_cell(cfg, K, seed):
    try:
        _, trace = _single_run(cfg, K, perm_seed=seed)
        return (K, seed, trace.final_gap, trace.to_csv(), None)
    except optimizer.NumericalAbort as exc:
        return (K, seed, math.nan, None, f"numerical abort: {exc}")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    sect = cfg.get("sweep", {})
    K_list = _int_list(sect.get("k_list", sect.get("K_list", "")))
    seeds = _int_list(sect.get("seeds", "0"))
    if not K_list:
        raise SpecError("sweep.k_list is required")
    if any(K < 2 for K in K_list):
        raise SpecError("every sweep horizon must satisfy K >= 2")
    if len(set(seeds)) != len(seeds):
        raise SpecError("repeated seed list entries are not allowed")
    workers = int(sect.get("workers", "1"))
    out = sect.get("out", args.out or "sweep_out")
    _prepare_outdir(out, args.force or _get(cfg, "sweep", "force", default=False, cast=bool))
    cells_dir = os.path.join(out, "cells")
    os.makedirs(cells_dir, exist_ok=True)

    jobs = [(K, seed) for K in sorted(K_list) for seed in seeds]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_sweep_cell, cfg, K, s) for K, s in jobs]
            results = [f.result() for f in futs]
    else:
        results = [_sweep_cell(cfg, K, s) for K, s in jobs]

    failures = []
    gaps = {}
    for K, seed, gap, csv_text, err in results:
        if err is not None:
            failures.append((K, seed, err))
            continue
        with open(os.path.join(cells_dir, f"K{K}_seed{seed}.csv"), "w") as fh:
            fh.write(csv_text)
        gaps.setdefault(K, []).append(gap)

    summary_lines = ["K,median_final_gap,runs"]
    medians = []
    for K in sorted(gaps):
        med = float(np.median(gaps[K]))
        medians.append((K, med))
        summary_lines.append(f"{K},{med!r},{len(gaps[K])}")
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        fh.write("\n".join(summary_lines) + "\n")

    for K, seed, err in failures:
        print(f"cell K={K} seed={seed} failed: {err}", file=sys.stderr)

    if len(medians) >= 4:
        fit = analysis.estimate_rate(medians)
        verdict = ""
        lo = _get(cfg, "sweep", "slope_min", cast=float)
        hi = _get(cfg, "sweep", "slope_max", cast=float)
        if lo is not None and hi is not None:
            inside = lo <= fit.slope <= hi
            verdict = f"  window [{lo}, {hi}]: {'PASS' if inside else 'FAIL'}"
        print(f"slope {fit.slope:.4f} (r^2 {fit.r_squared:.4f}){verdict}")
    else:
        print("slope: not fitted (need >= 4 distinct K values)")
    print(f"wrote {out}/summary.csv ({len(medians)} rows)")
    return EXIT_OK if not failures else EXIT_NUMERIC


def cmd_rate(args) -> int:
    pts = []
    with open(args.summary) as fh:
        header = fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) >= 2:
                pts.append((float(parts[0]), float(parts[1])))
    fit = analysis.estimate_rate(pts)
    print(f"slope {fit.slope:.4f}  intercept {fit.intercept:.4f}  r^2 {fit.r_squared:.4f}")
    if args.window:
        lo, hi = (float(v) for v in args.window.split(","))
        inside = lo <= fit.slope <= hi
        print(f"window [{lo}, {hi}]: {'PASS' if inside else 'FAIL'}")
        return EXIT_OK if inside else EXIT_VERIFY
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config, args.set)
    checks = []

    if "problem" in cfg:
        suite = [build_problem(cfg)]
    else:
        # Default small-n suite of smooth instances.
        suite = [problems.make_quadratic(n, 3, seed=100 + n, mu_f_target=0.2)
                 for n in (2, 3, 4, 5)]

    for idx, p in enumerate(suite):
        if p.n > 8:
            raise SpecError(f"brute-force verification requires n <= 8 (got n={p.n})")
        x1 = build_x1(cfg, p)
        ref = problems.compute_reference(p, x1)
        sig = analysis.sigma_report(p, ref)
        label = f"instance {idx} ({p.data.kind if p.data else 'custom'}, n={p.n})"

        ident = abs(sig.sigma_rand_sq - sig.sigma_any_sq - p.n * sig.grad_f_star_norm_sq)
        checks.append((f"{label}: sigma identity", ident <= 1e-12, f"residual {ident:.2e}"))

        if p.is_smooth:
            stats = analysis.residual_stats_bruteforce(p, ref.x_star)
            max_bound = p.n**2 * p.L_bar * sig.sigma_any_sq
            mean_bound = (2.0 / 3.0) * p.n * p.L_bar * sig.sigma_rand_sq
            ok_max = stats.max <= max_bound * (1 + 1e-9) + 1e-15
            ok_mean = stats.mean <= mean_bound * (1 + 1e-9) + 1e-15
            checks.append((f"{label}: residual max bound", ok_max,
                           f"max {stats.max:.4e} <= {max_bound:.4e}"))
            checks.append((f"{label}: residual mean bound", ok_mean,
                           f"mean {stats.mean:.4e} <= {mean_bound:.4e}"))

            co = analysis.cocoercivity_scan(p, pairs=200, seed=idx)
            checks.append((f"{label}: cocoercivity", co.ok,
                           f"worst margins {co.worst_lower_margin:.2e}/{co.worst_upper_margin:.2e}"))

            params = schedules.ScheduleParams(
                n=p.n, K=50, L_bar=p.L_bar, L_star=p.L_star, mu_f=p.mu_f,
                mu_psi=p.reg.mu_psi, sigma_any_sq=sig.sigma_any_sq,
                sigma_rand_sq=sig.sigma_rand_sq, D=max(ref.D, 1e-12),
            )
            rule = "smooth_strongly_any" if params.mu_F > 0 else "smooth_convex_any"
            sched = schedules.StepsizeSchedule(rule, params)
            run_cfg = optimizer.RunConfig(
                K=50, x1=x1, strategy=permutations.RR(p.n, seed=idx),
                schedule=sched,
                diagnostics=optimizer.DiagnosticFlags(
                    record_residual=True, check_descent=True, check_distance_recursion=True
                ),
            )
            trace = optimizer.run(p, run_cfg, ref)
            worst_margin = min(r.descent_margin for r in trace.records)
            checks.append((f"{label}: descent inequality", worst_margin >= -1e-8,
                           f"worst margin {worst_margin:.2e}"))
            rep = optimizer.distance_recursion_check(trace, p)
            checks.append((f"{label}: distance recursion", rep.ok, rep.message))

    rec = analysis.lemma_ineq_verify(1.0, 1.0, 0.1, 200)
    checks.append(("recursion bound (a=b=1, c=0.1, K=200)", rec.ok, rec.message))
    feas = schedules.adaptive_feasibility(
        schedules.ScheduleParams(n=1, K=2, G_bar=1.0, c=0.5, delta=1.0), terms=100_000
    )
    checks.append(("adaptive feasibility (c=0.5, delta=1)", feas.ok, feas.message))

    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        all_ok &= ok
        print(f"{name:<{width}}  {status}  {detail}")
    if not all_ok:
        for idx, p in enumerate(suite):
            if p.data is not None:
                path = f"verify_failure_instance_{idx}.txt"
                with open(path, "w") as fh:
                    fh.write(io.problem_to_text(p))
        print("verification failed; instances serialized for replay", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_show_manifest(args) -> int:
    path = args.path
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.txt")
    if not os.path.exists(path):
        raise SpecError(f"manifest not found: {path}")
    with open(path) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


# -- entry point -----------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxshuffle",
        description="Proximal shuffling gradient harness: run, sweep, verify, fit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="nested key-value config file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    sp = sub.add_parser("run", help="single run: trace CSV + manifest")
    add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="K x seed grid, summary CSV, slope fit")
    add_common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="lemma-level verification suite")
    add_common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("rate", help="fit a slope to an existing summary CSV")
    sp.add_argument("summary", help="summary CSV with K,gap columns")
    sp.add_argument("--window", help="lo,hi acceptance window for the slope")
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("show-manifest", help="print a run's manifest")
    sp.add_argument("path", help="manifest file or run directory")
    sp.set_defaults(func=cmd_show_manifest)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (ValueError, problems.ReferenceFailure) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except optimizer.NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
