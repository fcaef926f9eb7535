"""Command-line interface: ``censinv <command> ...``.

Commands print human-readable text; ``--report PATH`` additionally writes a
JSON report.  The exit code is 0 iff every check the command performs passes.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels, policy as pol, simulator as sim, solver
from .filter import read_log, replay
from .model import ModelError, load_model, validate

# Comparative-statics table for the bundled two-state instance:
# configuration -> (file stem, U(3, (0.5, 0.5), 0), order-up-to level)
REFERENCE_TABLE = {
    "uncensored": ("two_state_uncensored", 25.21, 2),
    "censored": ("two_state_censored", 25.97, 3),
    "K=2a": ("two_state_K2a", 16.37, 0),
    "c=0": ("two_state_c0", 16.71, 3),
    "zeta=0": ("two_state_zeta0", 22.92, 1),
    "salvage 50%": ("two_state_salvage50", 24.75, 2),
    "buy/sell": ("two_state_sellback", 24.30, 2),
}


def bundled_model(stem: str):
    path = resources.files("censinv") / "data" / f"{stem}.json"
    if not path.is_file():
        raise FileNotFoundError(f"bundled model {stem!r} is missing")
    return load_model(path)


def _floats(text):
    return [float(v) for v in text.split(",")]


def _steps(spec, dt):
    if dt is None:
        return solver.DEFAULT_STEPS
    n = int(round(spec.T / dt))
    if n < 1 or abs(n * dt - spec.T) > 1e-9 * spec.T:
        raise SystemExit(f"--dt {dt} does not divide T={spec.T}")
    return n


def _pi0(args, m):
    return np.full(m, 1.0 / m) if args.pi0 is None else np.asarray(_floats(args.pi0))


def _emit(report, args):
    if getattr(args, "report", None):
        Path(args.report).write_text(json.dumps(report, indent=2, default=float))


def make_policy(text: str, surface=None):
    """``never``, ``basestock:L``, ``ss:s,S`` or ``optimal`` (needs a surface)."""
    kind, _, arg = text.partition(":")
    if kind == "never":
        return pol.NeverOrder()
    if kind == "basestock":
        return pol.basestock(int(arg))
    if kind == "ss":
        s, S = (int(v) for v in arg.split(","))
        return pol.ReorderPoint(s, S)
    if kind == "optimal":
        if surface is None:
            raise SystemExit("policy 'optimal' needs --surface")
        return pol.DecisionRule(surface)
    raise SystemExit(f"unknown policy {text!r}")


# -- commands ------------------------------------------------------------

def cmd_validate(args):
    spec = load_model(args.model)
    problems = validate(spec)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    _emit({"ok": not problems, "violations": problems}, args)
    return 0 if not problems else 1


def cmd_solve(args):
    spec = load_model(args.model)
    N = _steps(spec, args.dt)
    t0 = time.perf_counter()
    S = solver.solve_forward(spec, args.belief_res, N, stockout_update=args.stockout_update)
    elapsed = time.perf_counter() - t0
    solver.save_surface(S, args.out)
    if args.csv:
        solver.export_csv(S, args.csv, every=args.every)
    report = {"model": str(args.model), "dt": S.dt, "n_T": S.n_T, "belief_res": S.k,
              "nodes": len(S.grid), "residual": S.residual, "backend": kernels.BACKEND,
              "seconds": elapsed}
    print(json.dumps(report, indent=2))
    _emit(report, args)
    return 0


def cmd_regions(args):
    S = solver.load_surface(args.surface)
    rule = pol.DecisionRule(S, args.eps_act)
    pol.export_regions(rule, args.a, args.out, every=args.every)
    print(f"wrote {args.out}")
    return 0


def cmd_advise(args):
    S = solver.load_surface(args.surface)
    rule = pol.DecisionRule(S, args.eps_act)
    rec = rule.recommend(args.t, _floats(args.pi), args.a)
    out = {"T_rem": args.t, "pi": _floats(args.pi), "a": args.a, **rec.to_dict()}
    print(json.dumps(out))
    _emit(out, args)
    return 0


def cmd_filter(args):
    spec = load_model(args.model)
    states = replay(spec, _pi0(args, spec.m), args.a0, read_log(args.log), args.horizon)
    lines = ["t," + ",".join(f"pi_{i + 1}" for i in range(spec.m)) + ",P"]
    for st in states:
        lines.append(",".join([repr(st.t), *(repr(float(p)) for p in st.belief),
                               str(st.inventory)]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args):
    spec = load_model(args.model)
    surface = solver.load_surface(args.surface) if args.surface else None
    policy = make_policy(args.policy, surface)
    dt = surface.dt if surface is not None else (args.dt or spec.T / solver.DEFAULT_STEPS)
    res = sim.mc_evaluate(spec, policy, _pi0(args, spec.m), args.a0, args.paths, args.seed, dt)
    if args.out:
        sim.write_paths_csv(res, args.seed, args.out)
    summary = {**res.summary(), "seed": args.seed, "policy": args.policy}
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2))
    print(f"mean {res.mean:.4f} +/- {res.stderr:.4f} over {args.paths} paths")
    _emit(summary, args)
    return 0


def end_to_end(spec, k, N, n_paths, seed, pi0, a0=0, tol=0.0, heuristics=None):
    """Solve, extract the decision rule, and Monte Carlo check it.

    The grid tolerance is the larger of ``tol`` and the change of
    ``U(T, pi0, a0)`` between the lattice and its half-resolution coarsening.
    Returns the report dictionary.
    """
    S = solver.solve_forward(spec, k, N)
    coarse = solver.solve_forward(spec, max(1, k // 2), max(1, N // 2))
    U = S.value(spec.T, pi0, a0)
    U0 = float(S.interp(S.U0, S.n_T, pi0)[a0])
    grid_tol = max(tol, abs(U - coarse.value(spec.T, pi0, a0)))
    rule = pol.DecisionRule(S)
    heuristics = heuristics if heuristics is not None else default_heuristics(spec)
    streams = np.random.SeedSequence(seed).spawn(2 + len(heuristics))
    checks = []
    opt = sim.mc_evaluate(spec, rule, pi0, a0, n_paths, streams[0], S.dt)
    checks.append({"name": "optimal policy", "mc": opt.mean, "stderr": opt.stderr,
                   "target": U, "ok": abs(opt.mean - U) <= 3 * opt.stderr + grid_tol})
    never = sim.mc_evaluate(spec, pol.NeverOrder(), pi0, a0, n_paths, streams[1], S.dt)
    checks.append({"name": "never order", "mc": never.mean, "stderr": never.stderr,
                   "target": U0, "ok": abs(never.mean - U0) <= 3 * never.stderr + grid_tol})
    for i, (name, p) in enumerate(heuristics.items()):
        r = sim.mc_evaluate(spec, p, pi0, a0, n_paths, streams[2 + i], S.dt)
        checks.append({"name": name, "mc": r.mean, "stderr": r.stderr, "target": U,
                       "ok": r.mean >= U - grid_tol - 3 * r.stderr})
    return {"U": U, "U0": U0, "grid_tol": grid_tol, "residual": S.residual,
            "dt": S.dt, "belief_res": S.k, "paths": n_paths, "seed": seed,
            "checks": checks, "ok": all(c["ok"] for c in checks)}


def default_heuristics(spec):
    P = spec.Pbar
    out = {f"basestock {L}": pol.basestock(L) for L in range(1, P + 1)}
    out[f"(s,S)=(0,{P})"] = pol.ReorderPoint(0, P)
    return out


def cmd_evaluate(args):
    spec = load_model(args.model)
    N = _steps(spec, args.dt)
    k = args.belief_res or solver.default_resolution(spec.m)
    rep = end_to_end(spec, k, N, args.paths, args.seed, _pi0(args, spec.m), args.a0,
                     args.tol or 0.0)
    print(f"U = {rep['U']:.4f}, U0 = {rep['U0']:.4f}, grid tolerance {rep['grid_tol']:.4f}")
    for c in rep["checks"]:
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {c['name']:<16} MC {c['mc']:.4f} "
              f"+/- {c['stderr']:.4f}  vs {c['target']:.4f}")
    _emit(rep, args)
    return 0 if rep["ok"] else 1


def reproduce_table(k=None, N=None, tol=0.02, refine=False):
    rows = []
    for label, (stem, U_ref, d_ref) in REFERENCE_TABLE.items():
        spec = bundled_model(stem)
        t0 = time.perf_counter()
        S = solver.solve_forward(spec, k, N)
        pi = np.array([0.5, 0.5])
        g = S.node_index(pi)
        U, d = float(S.U[-1, g, 0]), int(S.d[-1, g, 0])
        row = {"config": label, "U": U, "d": d, "U_ref": U_ref, "d_ref": d_ref,
               "rel_err": abs(U - U_ref) / U_ref, "seconds": time.perf_counter() - t0,
               "dt": S.dt, "belief_res": S.k}
        if refine:
            F = solver.solve_forward(spec, 2 * S.k, 2 * S.n_T)
            Uf = float(F.U[-1, F.node_index(pi), 0])
            row["U_refined"] = Uf
            row["refine_change"] = abs(Uf - U) / abs(Uf)
        row["ok"] = bool(row["rel_err"] <= tol and d == d_ref
                         and row.get("refine_change", 0.0) < 0.005)
        rows.append(row)
    return rows


def cmd_reproduce(args):
    rows = reproduce_table(args.belief_res, None if args.dt is None else int(round(3.0 / args.dt)),
                           args.tol or 0.02, args.refine)
    print(f"{'configuration':<14}{'U':>9}{'ref':>8}{'err%':>7}{'d':>3}{'ref':>4}")
    for r in rows:
        print(f"{r['config']:<14}{r['U']:9.3f}{r['U_ref']:8.2f}{100 * r['rel_err']:7.2f}"
              f"{r['d']:3d}{r['d_ref']:4d}  {'PASS' if r['ok'] else 'FAIL'}")
    _emit({"rows": rows, "ok": all(r["ok"] for r in rows)}, args)
    return 0 if all(r["ok"] for r in rows) else 1


# -- parser --------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="censinv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--report", help="also write a JSON report here")
        return sp

    def positive(kind):
        def parse(text):
            v = kind(text)
            if v <= 0:
                raise argparse.ArgumentTypeError(f"{text} is not positive")
            return v
        return parse

    sp = add("validate", cmd_validate, "check a model file")
    sp.add_argument("--model", required=True)

    sp = add("solve", cmd_solve, "solve for the value surface")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dt", type=positive(float))
    sp.add_argument("--belief-res", type=positive(int))
    sp.add_argument("--out", required=True, help="binary surface file")
    sp.add_argument("--csv", help="also export U.csv here")
    sp.add_argument("--every", type=positive(int), default=1, help="CSV slice stride")
    sp.add_argument("--stockout-update", choices=("aggregated", "revealed"),
                    default="aggregated")

    sp = add("regions", cmd_regions, "export act/order-up-to regions as CSV")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--a", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--every", type=positive(int), default=1)
    sp.add_argument("--eps-act", type=float)

    sp = add("advise", cmd_advise, "recommend an action")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--t", type=float, required=True, help="remaining horizon")
    sp.add_argument("--pi", required=True, help="comma-separated belief")
    sp.add_argument("--a", type=int, required=True)
    sp.add_argument("--eps-act", type=float)

    sp = add("filter", cmd_filter, "replay an event log through the filter")
    sp.add_argument("--model", required=True)
    sp.add_argument("--log", required=True, help="JSON lines event log")
    sp.add_argument("--pi0")
    sp.add_argument("--a0", type=int, default=0)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--out")

    for name, fn, help in (("simulate", cmd_simulate, "Monte Carlo cost of a policy"),
                           ("evaluate", cmd_evaluate, "solve, simulate and compare")):
        sp = add(name, fn, help)
        sp.add_argument("--model", required=True)
        sp.add_argument("--paths", type=positive(int), default=10000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--pi0")
        sp.add_argument("--a0", type=int, default=0)
        sp.add_argument("--dt", type=positive(float))
    sp = sub.choices["simulate"]
    sp.add_argument("--surface")
    sp.add_argument("--policy", default="optimal",
                    help="optimal | never | basestock:L | ss:s,S")
    sp.add_argument("--out", help="per-path CSV")
    sp.add_argument("--summary", help="aggregate JSON")
    sp = sub.choices["evaluate"]
    sp.add_argument("--belief-res", type=positive(int))
    sp.add_argument("--tol", type=float, help="minimum grid tolerance")

    sp = add("reproduce", cmd_reproduce, "comparative-statics table")
    sp.add_argument("--table", default="comparative", choices=("comparative",))
    sp.add_argument("--dt", type=positive(float))
    sp.add_argument("--belief-res", type=positive(int))
    sp.add_argument("--tol", type=float, help="relative tolerance (default 0.02)")
    sp.add_argument("--refine", action="store_true",
                    help="also solve at doubled resolution")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, FileNotFoundError, ValueError, solver.ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
