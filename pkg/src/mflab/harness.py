"""Scenario files, sweep runners and CSV reports.

A scenario is a flat TOML table with a ``kind`` among graph_limit, chaos,
consensus, pde and w1_suite. Functions of space are written in the PDE
expression language: ``sigma`` over (x, xp), ``y0`` over x, the
Cucker-Smale weight ``a`` over r, Hamiltonians over (q, p) and (q, p, qp, pp).
"""

from __future__ import annotations

import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import dsl
from .euler import graph_limit_experiment, opinion_constant_closed_form
from .experiments import chaos_suite, consensus_experiment, lemma_suite
from .fitting import fit_rate
from .kernels import InteractionKernel, cucker_smale_kernel, hamiltonian_pair_kernel, opinion_kernel
from .marginals import certificates_csv
from .pde import CALIBRATED_C, l2_error, l2_norm, particle_pde_solve, reference_pde_solve, scaling_schedule

KINDS = ("graph_limit", "chaos", "consensus", "pde", "w1_suite")
REQUIRED = {
    "graph_limit": ("N_list", "t_end", "dt", "y0"),
    "chaos": ("N_list", "y0"),
    "consensus": ("sigma", "N", "K", "t_end"),
    "pde": ("pde", "N_list", "t_end", "y0"),
    "w1_suite": ("instances",),
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    params: dict
    source: str = "<memory>"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"{self.source}: unknown kind {self.kind!r}, expected one of {', '.join(KINDS)}")
        missing = [k for k in REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise ScenarioError(f"{self.source}: kind {self.kind!r} needs {', '.join(missing)}")
        Ns = self.params.get("N_list")
        if Ns is not None and (list(Ns) != sorted(Ns) or len(set(Ns)) != len(Ns)):
            raise ScenarioError(f"{self.source}: N_list must be strictly ascending")

    def get(self, key, default=None):
        return self.params.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.params.get("seed", 0))

    @classmethod
    def from_text(cls, text: str, source: str = "<memory>") -> "Scenario":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ScenarioError(f"{source}: {e}") from None
        kind = data.pop("kind", None)
        if kind is None:
            raise ScenarioError(f"{source}: missing key 'kind'")
        name = data.pop("name", Path(source).stem)
        return cls(name, kind, data, source)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        return cls.from_text(path.read_text(), str(path))


def bundled_scenarios() -> list[str]:
    root = resources.files("mflab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario(ref: str) -> Scenario:
    """A path, or the name of a bundled scenario."""
    if os.path.exists(ref):
        return Scenario.load(ref)
    name = ref[:-5] if ref.endswith(".toml") else ref
    if name in bundled_scenarios():
        res = resources.files("mflab") / "scenarios" / f"{name}.toml"
        return Scenario.from_text(res.read_text(), f"{name}.toml")
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")


# expressions ----------------------------------------------------------------

def expression(sc: Scenario, key: str, variables) -> Callable:
    text = str(sc.params[key])
    try:
        node = dsl.parse_expression(text, variables)
    except dsl.ParseError as e:
        raise ScenarioError(f"{sc.source}: key {key!r}: {e}") from None
    return dsl.compile_expression(node, variables)


def _expression_node(sc: Scenario, key: str, variables):
    try:
        return dsl.parse_expression(str(sc.params[key]), variables)
    except dsl.ParseError as e:
        raise ScenarioError(f"{sc.source}: key {key!r}: {e}") from None


def initial_field(sc: Scenario, key: str = "y0") -> Callable:
    val = sc.params[key]
    texts = val if isinstance(val, list) else [val]
    fs = []
    for i, t in enumerate(texts):
        try:
            fs.append(dsl.compile_expression(dsl.parse_expression(str(t), ("x",)), ("x",)))
        except dsl.ParseError as e:
            raise ScenarioError(f"{sc.source}: key {key!r}[{i}]: {e}") from None
    if len(fs) == 1:
        return fs[0]
    return lambda x: np.stack([f(np.asarray(x, dtype=float)) for f in fs], axis=-1)


def _constant(node) -> Optional[float]:
    return None if dsl.free_variables(node) else float(dsl.evaluate(node, {}))


def build_kernel(sc: Scenario) -> InteractionKernel:
    name = sc.get("kernel", "opinion")
    metric = sc.get("metric", "interval")
    if name == "opinion":
        node = _expression_node(sc, "sigma", ("x", "xp")) if "sigma" in sc.params else ("num", 1.0)
        c = _constant(node)
        return opinion_kernel(c if c is not None else dsl.compile_expression(node, ("x", "xp")), metric=metric)
    if name == "cucker_smale":
        a = expression(sc, "a", ("r",)) if "a" in sc.params else (lambda r: 1.0 / (1.0 + r * r))
        return cucker_smale_kernel(a, metric=metric)
    if name == "hamiltonian":
        v1, v2 = ("q", "p"), ("q", "p", "qp", "pp")
        hs = _expression_node(sc, "h_single", v1) if "h_single" in sc.params else ("num", 0.0)
        hp = _expression_node(sc, "h_pair", v2) if "h_pair" in sc.params else ("num", 0.0)
        ds = [dsl.compile_expression(dsl.differentiate(hs, v), v1) for v in v1]
        dp = [dsl.compile_expression(dsl.differentiate(hp, v), v2) for v in v2]
        gs = lambda q, p: tuple(f(q, p) for f in ds)
        gp = lambda q, p, qq, pp: tuple(f(q, p, qq, pp) for f in dp)
        return hamiltonian_pair_kernel(gs, gp, metric=metric)
    if name in ("mollified_pde", "gaussian_pde"):
        from .pde import gaussian_pde_kernel, mollified_kernel
        spec = parse_spec(sc)
        eps = float(sc.params["eps"])
        k = gaussian_pde_kernel(spec, eps) if name == "gaussian_pde" else mollified_kernel(spec, eps)
        return k.as_interaction_kernel()
    raise ScenarioError(f"{sc.source}: unknown kernel {name!r}")


def parse_spec(sc: Scenario) -> dsl.PdeSpec:
    try:
        return dsl.parse_pde(str(sc.params["pde"]), sc.get("domain", "torus"))
    except dsl.ParseError as e:
        raise ScenarioError(f"{sc.source}: key 'pde': {e}") from None


# reports ----------------------------------------------------------------------

@dataclass
class Report:
    name: str
    kind: str
    tables: dict = field(default_factory=dict)  # file name -> csv text
    counts: dict = field(default_factory=lambda: {"pass": 0, "fail": 0, "inconclusive": 0})
    hard_ok: bool = True
    notes: list = field(default_factory=list)

    def tally(self, verdict: str, hard: bool = True) -> None:
        self.counts[verdict] += 1
        if verdict == "fail" and hard:
            self.hard_ok = False

    def summary(self) -> str:
        c = self.counts
        extra = "".join(f" {n}" for n in self.notes)
        status = "OK" if self.hard_ok else "FAILED"
        return f"{self.name} [{self.kind}]:{extra} pass={c['pass']} fail={c['fail']} " \
               f"inconclusive={c['inconclusive']} -> {status}"

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for fname, text in self.tables.items():
            p = out / f"{self.name}_{fname}"
            with open(p, "w", newline="") as fh:
                fh.write(text)
            paths.append(p)
        return paths


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(v) -> str:
    return repr(float(v))


def _pool_map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def run_graph_limit(sc: Scenario, threads: int = 1) -> Report:
    k = build_kernel(sc)
    y0 = initial_field(sc)
    ref = sc.get("reference", 2048)
    if ref == "closed_form":
        c = _constant(_expression_node(sc, "sigma", ("x", "xp"))) if "sigma" in sc.params else 1.0
        if k.name != "opinion" or c is None:
            raise ScenarioError(f"{sc.source}: closed_form reference needs the opinion kernel with constant sigma")
        ref = opinion_constant_closed_form(c, y0)
    elif not isinstance(ref, int):
        raise ScenarioError(f"{sc.source}: reference must be an integer M or 'closed_form'")
    tab = graph_limit_experiment(k, y0, sc.params["N_list"], float(sc.params["t_end"]), float(sc.params["dt"]),
                                 reference=ref, tag_rule=sc.get("tag_rule", "left"), scheme=sc.get("scheme", "rk4"),
                                 samples=int(sc.get("samples", 256)), seed=sc.seed, threads=threads)
    rep = Report(sc.name, sc.kind, {"graph_limit.csv": tab.to_csv()})
    slack = float(sc.get("slack", 1.05))
    for ok in tab.bound_ok(slack):
        rep.tally("pass" if ok else ("inconclusive" if tab.estimated else "fail"))
    if tab.fit is not None:
        rep.notes.append(f"slope={tab.fit.slope:.4f} R2={tab.fit.r2:.4f}")
        lo, hi = sc.get("slope_range", [-math.inf, math.inf])
        rep.tally("pass" if lo <= tab.fit.slope <= hi else "fail")
        if "r2_min" in sc.params:
            rep.tally("pass" if tab.fit.r2 >= float(sc.params["r2_min"]) else "fail")
    return rep


def run_chaos(sc: Scenario, threads: int = 1) -> Report:
    k = build_kernel(sc)
    y0 = initial_field(sc)
    Ns = list(sc.params["N_list"])
    t_list = [float(t) for t in sc.get("t_list", [0.0, 1.0])]

    def one(N):
        return chaos_suite(k, y0, [N], int(sc.get("n", 2)), t_list, int(sc.get("reference_M", 16)),
                           float(sc.get("dt", 1e-3)), int(sc.get("samples", 256)), sc.seed)

    certs = [c for part in _pool_map(one, Ns, threads) for c in part]
    rep = Report(sc.name, sc.kind, {"certificates.csv": certificates_csv(certs)})
    for c in certs:
        rep.tally(c.verdict)
    return rep


def run_consensus(sc: Scenario, threads: int = 1) -> Report:
    sigma = expression(sc, "sigma", ("x", "xp"))
    res = consensus_experiment(sigma, int(sc.params["N"]), int(sc.params["K"]), float(sc.params["t_end"]),
                               float(sc.get("dt", 1e-3)), sc.seed, tuple(sc.get("k_list", [3, 4])))
    rep = Report(sc.name, sc.kind, {"consensus.csv": res.to_csv()})
    tol = float(sc.get("tolerance", 1e-5))
    rep.tally("pass" if res.max_rel_error <= tol else "fail")
    rep.notes.append(f"T_rel_err={res.max_rel_error:.3e}")
    rep.notes.extend(f"y{k}_rate={w}" for k, w in sorted(res.winner.items()))
    return rep


def schedule_constant(sc: Scenario, spec: dsl.PdeSpec) -> Optional[float]:
    C = sc.get("eps_schedule_C")
    if C is None:
        return None
    if C == "calibrated":
        key = {"dt y = dx^2 y": "heat", "dt y = -1 * dx^1 y": "transport"}.get(spec.text.strip())
        if key is None:
            raise ScenarioError(f"{sc.source}: no calibrated schedule constant for {spec.text!r}")
        return CALIBRATED_C[key]
    return float(C)


def run_pde(sc: Scenario, threads: int = 1) -> Report:
    spec = parse_spec(sc)
    y0 = initial_field(sc)
    t_end = float(sc.params["t_end"])
    dt = float(sc.get("dt", 1e-3))
    C = schedule_constant(sc, spec)
    if C is None and "eps" not in sc.params:
        raise ScenarioError(f"{sc.source}: pde scenarios need eps or eps_schedule_C")
    ref = reference_pde_solve(spec, y0, t_end)

    def one(N):
        eps = scaling_schedule(N, C, spec.order) if C is not None else float(sc.params["eps"])
        f = particle_pde_solve(spec, None, eps, N, y0, t_end, dt)
        err = l2_error(f, ref)
        return N, eps, err, err / l2_norm(f.partition, ref)

    rows = _pool_map(one, list(sc.params["N_list"]), threads)
    rep = Report(sc.name, sc.kind, {"pde.csv": _csv([[N, _r(e), _r(a), _r(r)] for N, e, a, r in rows],
                                                    ["N", "eps", "l2_error", "relative"])})
    errs = [r[2] for r in rows]
    if sc.get("assert_decreasing", False):
        rep.tally("pass" if all(a > b for a, b in zip(errs, errs[1:])) else "fail")
    if "max_final_relative" in sc.params:
        rep.tally("pass" if rows[-1][3] <= float(sc.params["max_final_relative"]) else "fail")
    rep.notes.append(f"final_relative={rows[-1][3]:.4f}")
    if len(rows) >= 3:
        rep.notes.append(f"slope={fit_rate([(r[0], r[2]) for r in rows]).slope:.4f}")
    return rep


def run_w1_suite(sc: Scenario, threads: int = 1) -> Report:
    res = lemma_suite(int(sc.params["instances"]), sc.seed, int(sc.get("max_atoms", 4)), int(sc.get("max_dim", 2)))
    rows = [[r.instance, r.lemma, _r(r.lhs), _r(r.rhs), "pass" if r.passed else "fail"] for r in res]
    rep = Report(sc.name, sc.kind, {"w1_suite.csv": _csv(rows, ["instance", "lemma", "lhs", "rhs", "verdict"])})
    for r in res:
        rep.tally("pass" if r.passed else "fail")
    return rep


RUNNERS = {"graph_limit": run_graph_limit, "chaos": run_chaos, "consensus": run_consensus, "pde": run_pde,
           "w1_suite": run_w1_suite}


def run_scenario(sc: Scenario, threads: int = 1, seed: Optional[int] = None) -> Report:
    if seed is not None:
        sc = Scenario(sc.name, sc.kind, {**sc.params, "seed": int(seed)}, sc.source)
    return RUNNERS[sc.kind](sc, threads)


def run(ref: str, out_dir=None, threads: int = 1, seed: Optional[int] = None) -> Report:
    """Load a scenario file (or bundled name), run it and write its CSV tables."""
    sc = resolve_scenario(ref)
    rep = run_scenario(sc, threads, seed)
    out = out_dir if out_dir is not None else sc.get("output", "reports")
    rep.write(out)
    return rep
