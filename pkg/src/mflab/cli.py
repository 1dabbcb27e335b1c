"""Command line entry point ``mflab``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dsl
from .harness import ScenarioError, bundled_scenarios, run
from .measures import DiscreteMeasure
from .pde import l2_error, l2_norm, particle_pde_solve, reference_pde_solve, scaling_schedule
from .wasserstein import w1_lp


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", default=None, help="output directory for CSV reports")
    p.add_argument("--seed", type=int, default=None, help="64-bit seed for the Philox generator")


def _parse_schedule(text: str) -> float:
    key, _, val = text.partition("=")
    if key.strip() != "C" or not val:
        raise argparse.ArgumentTypeError("expected C=<value>")
    return float(val)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mflab", description="Particle systems, graph limits and mean-field certificates.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file or a bundled scenario")
    r.add_argument("scenario", nargs="+")
    _common(r)
    sub.add_parser("list", help="list bundled scenarios")
    p = sub.add_parser("pde", help="particle solve of a PDE given in the DSL")
    p.add_argument("--pde", required=True)
    p.add_argument("--domain", choices=("torus", "interval"), default="torus")
    p.add_argument("--N", type=int, nargs="+", default=[256])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--eps-schedule", type=_parse_schedule, default=None, metavar="C=<value>")
    g.add_argument("--eps", type=float, default=None)
    p.add_argument("--t", type=float, default=0.25)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--y0", default="sin(2*pi*x)")
    _common(p)
    w = sub.add_parser("w1", help="exact W1 between two measures stored as CSV (weight, x, xi_k)")
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("--metric", choices=("interval", "torus"), default="interval")
    _common(w)
    return ap


def _cmd_run(args) -> int:
    ok = True
    for ref in args.scenario:
        rep = run(ref, args.out, args.threads, args.seed)
        print(rep.summary())
        ok = ok and rep.hard_ok
    return 0 if ok else 1


def _cmd_pde(args) -> int:
    spec = dsl.parse_pde(args.pde, args.domain)
    y0 = dsl.compile_expression(dsl.parse_expression(args.y0, ("x",)), ("x",))
    ref = None
    if not spec.quasilinear and spec.autonomous and spec.domain == "torus":
        ref = reference_pde_solve(spec, y0, args.t)
    C = args.eps_schedule if args.eps is None else None
    if C is None and args.eps is None:
        C = 1.0
    lines = ["N,eps,l2_error,relative"]
    for N in args.N:
        eps = scaling_schedule(N, C, spec.order) if C is not None else args.eps
        f = particle_pde_solve(spec, None, eps, N, y0, args.t, args.dt)
        if ref is None:
            lines.append(f"{N},{eps!r},,")
        else:
            e = l2_error(f, ref)
            lines.append(f"{N},{eps!r},{e!r},{e / l2_norm(f.partition, ref)!r}")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / f"pde_N{N}.csv").write_text(f.to_csv())
    text = "\n".join(lines) + "\n"
    if args.out:
        (Path(args.out) / "pde_summary.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def _cmd_w1(args) -> int:
    a = DiscreteMeasure.from_csv(Path(args.a).read_text())
    b = DiscreteMeasure.from_csv(Path(args.b).read_text())
    cost, plan = w1_lp(a, b, args.metric)
    print(repr(cost))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "plan.csv").write_text(plan.to_csv())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "list":
            print("\n".join(bundled_scenarios()))
            return 0
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return {"run": _cmd_run, "pde": _cmd_pde, "w1": _cmd_w1}[args.cmd](args)
    except (ScenarioError, dsl.ParseError, ValueError, OSError) as e:
        print(f"mflab: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
