"""Command-line runner for the verification experiments.

Usage::

    heightspin --config run.toml [--seed N] [--out DIR] [--threads N]
    heightspin --suite smoke|full [--out DIR]

Each flag can also come from an environment variable with the
``HEIGHTSPIN_`` prefix (``HEIGHTSPIN_CONFIG``, ``HEIGHTSPIN_SEED``,
``HEIGHTSPIN_OUT``, ``HEIGHTSPIN_THREADS``, ``HEIGHTSPIN_SUITE``); flags win.

Exit status: 0 all checks passed, 1 a check failed, 2 bad configuration,
3 a computation exceeded its budget.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import network
from .network import BudgetError
from .report import CheckReport, digest, dumps, make_report

SCHEMA = 1
ENV_PREFIX = "HEIGHTSPIN_"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

KINDS = ("duality", "rsd", "stiffness", "loops", "key-bound", "depinning", "simon-lieb", "surgery", "metric-xy", "bernstein")

# human-readable statement each experiment tests, carried into report metadata
STATEMENTS = {
    "duality": "Villain partition function equals the dual integer Gaussian partition function up to (2 pi)^(free dual sites); spin correlations equal defect expectations",
    "rsd": "lattice Gaussian MGF inequalities (Pythagoras, sublattice and matrix monotonicity, Hessian, correlation, submodularity), the annealed sublattice bound, the equal-heights correlation inequality, and Gaussian domination of the integer field",
    "stiffness": "lowering the high boundary set by one does not decrease the constrained partition function",
    "loops": "crossing identity, loops-to-height bound and the four-quadrant loop bound",
    "key-bound": "Villain spin correlation dominates the exploration event probability",
    "depinning": "height variance grows with the box at weak coupling and stays bounded at strong coupling",
    "simon-lieb": "Simon-Lieb chain for XY and Villain correlations across a separating set",
    "surgery": "edge splitting preserves marginals; integer restriction and merging do not increase fluctuations",
    "metric-xy": "XY on the N-fold refined graph approaches the Villain correlation",
    "bernstein": "complete monotonicity of exp(-U(sqrt t)) for power-law potentials, the Bessel addition identity and positivity of G_U",
}

PARAMS = {
    "duality": {"betas": [0.5, 1.0, 2.0], "K": 12, "tol": 1e-6, "paths": [], "path_tol": 1e-9},
    "rsd": {"instances": 20, "annealed": 5, "k": 3, "tol": 1e-9, "domination": 0, "domination_L": 2},
    "stiffness": {"instances": 10, "K": 8, "tol": 1e-12},
    "loops": {"scan_faces": 6, "hmax": 2, "mc_configs": 1000, "mc_L": 4, "lam": 1.0, "burn_in": 1000, "snapshot_every": 10},
    "key-bound": {"betas": [1.0], "max_len": 4, "qs": [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5], "K": 10, "mc": False, "mc_L": 4, "sweeps": 20000, "burn_in": 2000},
    "depinning": {"Ls": [2, 4, 8], "lams": [0.2, 5.0], "sweeps": 20000, "burn_in": 2000, "chains": 1},
    "simon-lieb": {"models": ["xy", "villain"], "betas": [0.5, 1.0, 2.0], "x": 0, "y": 3, "separator": [1], "tol": 1e-8},
    "surgery": {"lam": 1.0, "L": 1, "r": 2, "tol": 1e-9},
    "metric-xy": {"beta": 1.0, "Ns": [1, 2, 4, 8], "sweeps": 100000, "burn_in": 5000, "chains": 1},
    "bernstein": {"k_max": 6, "tol": 1e-7},
}

GRAPH_KEYS = {"kind", "L", "n"}
BUDGET_KEYS = {"max_intermediate", "max_sweeps"}
TOP_KEYS = {"schema", "kind", "seed", "out", "graph", "potential", "params", "budget"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    graph: dict = field(default_factory=dict)
    potential: str | None = None
    params: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "kind": self.kind, "graph": self.graph, "potential": self.potential, "params": self.params, "budget": self.budget, "seed": self.seed}


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a decoded TOML document; unknown keys are errors."""
    if not data:
        raise ConfigError("empty configuration")
    extra = set(data) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    if data.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"unsupported schema {data.get('schema')!r}")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    graph = dict(data.get("graph", {}))
    if set(graph) - GRAPH_KEYS:
        raise ConfigError(f"unknown graph keys: {sorted(set(graph) - GRAPH_KEYS)}")
    pot = data.get("potential")
    if isinstance(pot, dict):
        if set(pot) - {"spec"}:
            raise ConfigError("potential table only takes 'spec'")
        pot = pot.get("spec")
    if pot is not None:
        from .potential import PotentialError, parse_potential

        try:
            parse_potential(pot)
        except (PotentialError, ValueError) as err:
            raise ConfigError(f"bad potential spec {pot!r}: {err}") from None
    params = dict(data.get("params", {}))
    unknown = set(params) - set(PARAMS[kind])
    if unknown:
        raise ConfigError(f"unknown params for {kind}: {sorted(unknown)}")
    merged = {**copy.deepcopy(PARAMS[kind]), **params}
    budget = dict(data.get("budget", {}))
    if set(budget) - BUDGET_KEYS:
        raise ConfigError(f"unknown budget keys: {sorted(set(budget) - BUDGET_KEYS)}")
    if "max_intermediate" in budget and not 0 < float(budget["max_intermediate"]) <= network.MAX_INTERMEDIATE:
        raise ConfigError("max_intermediate must be positive and within the module limit")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return ExperimentConfig(kind, graph, pot, merged, budget, seed, str(data.get("out", "out")))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(data)


# -- graph construction -----------------------------------------------------------------


def build_graph(spec: dict, default_kind: str = "square", default_L: int = 1):
    from .graph import build_periodic_lattice, build_square_lattice

    kind = spec.get("kind", default_kind)
    if kind == "square":
        return build_square_lattice(int(spec.get("L", default_L)))
    if kind in ("triangular", "hexagonal"):
        return build_periodic_lattice(kind, int(spec.get("L", default_L)))
    n = int(spec.get("n", 4))
    if kind == "path":
        return (n, np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64), np.ones(n - 1))
    if kind == "star":
        return (n, np.array([(0, i) for i in range(1, n)], dtype=np.int64), np.ones(n - 1))
    if kind == "two-vertex":
        return (2, np.array([(0, 1)], dtype=np.int64), np.ones(1))
    raise ConfigError(f"unknown graph kind {kind!r}")


# -- experiments ------------------------------------------------------------------------


@dataclass
class Outcome:
    reports: list[CheckReport]
    tables: dict = field(default_factory=dict)


def _duality(cfg: ExperimentConfig) -> Outcome:
    from .exact import correlation_duality_check, duality_check

    g = build_graph(cfg.graph)
    p = cfg.params
    reps = [duality_check(g, float(b), K=int(p["K"]), tol=float(p["tol"])) for b in p["betas"]]
    for b in p["betas"]:
        by_ends: dict = {}
        for gamma in p["paths"]:
            r = correlation_duality_check(g, float(b), gamma, K=int(p["K"]), tol=float(p["tol"]))
            reps.append(r)
            by_ends.setdefault((gamma[0], gamma[-1]), []).append((gamma, r.rhs))
        # different paths with the same endpoints must give the same defect expectation
        for group in by_ends.values():
            for (g1, t1), (g2, t2) in zip(group[:-1], group[1:]):
                reps.append(make_report("defect_path_independence", abs(t1 - t2), 0.0, float(p["path_tol"]), inputs={"beta": float(b), "paths": [g1, g2]}))
    return Outcome(reps)


def _rsd(cfg: ExperimentConfig) -> Outcome:
    from .graph import dual
    from .lattice import annealed_rsd_check, equal_heights_correlation_check, random_rsd_instance, rsd_suite
    from .potential import gaussian, parse_potential

    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    reps = []
    for _ in range(int(p["instances"])):
        d = random_rsd_instance(rng, int(p["k"]))
        reps += rsd_suite(d["m"], d["sub"], d["B"], d["u"], d["v"], d["sub2"], d["M"], tol=float(p["tol"]))
    g = build_graph(cfg.graph)
    dg = dual(g)
    U = parse_potential(cfg.potential) if cfg.potential else gaussian(1.0)
    for _ in range(int(p["annealed"])):
        a, b = (int(s) for s in rng.choice(dg.n_sites, size=2, replace=False))
        v = {int(s): float(rng.uniform(-0.5, 0.5)) for s in rng.choice(dg.n_sites, size=2, replace=False)}
        reps.append(annealed_rsd_check(dg, U, [(a, b)], v, tol=float(p["tol"])))
    for _ in range(int(p["instances"])):
        lam = float(rng.uniform(0.3, 3.0))
        pts = [int(s) for s in rng.choice(dg.n_sites + 1, size=4, replace=False)]
        reps.append(equal_heights_correlation_check(dg, gaussian(lam), pts[:2], pts[2:], tol=float(p["tol"])))
    if int(p["domination"]):
        from .exact import gaussian_domination_check
        from .graph import build_square_lattice

        dg2 = dual(build_square_lattice(int(p["domination_L"])))
        for _ in range(int(p["domination"])):
            lam = float(rng.uniform(0.5, 2.0))
            v = {int(s): float(rng.uniform(-1.0, 1.0)) for s in rng.choice(dg2.n_sites, size=2, replace=False)}
            reps += gaussian_domination_check(dg2, lam, v, tol=float(p["tol"]))
    return Outcome(reps)


def _stiffness(cfg: ExperimentConfig) -> Outcome:
    from .exact import random_stiffness_instance, stiffness_check
    from .graph import dual
    from .potential import gaussian, parse_potential

    p = cfg.params
    dg = dual(build_graph(cfg.graph))
    U = parse_potential(cfg.potential) if cfg.potential else gaussian(1.0)
    rng = np.random.default_rng(cfg.seed)
    tol = float(p["tol"])
    # the empty high set is the degenerate instance with ratio exactly one
    reps = [stiffness_check(dg, U, [], [], [], [], tol=tol)]
    for _ in range(int(p["instances"])):
        reps.append(stiffness_check(dg, U, K=int(p["K"]), tol=tol, **random_stiffness_instance(rng, dg.n_sites)))
    return Outcome(reps)


def _loops(cfg: ExperimentConfig) -> Outcome:
    from .graph import build_square_lattice, dual
    from .loops import nearest_faces, loop_bound_violations, restricted_scan
    from .mc import ChainSpec, iter_configs, sample_zuf
    from .potential import gaussian

    p = cfg.params
    dg = dual(build_graph(cfg.graph, default_L=2))
    f0 = dg.site_at(0.5, 0.5)
    hm = int(p["hmax"])
    faces = nearest_faces(dg, f0, int(p["scan_faces"]))
    scan = loop_bound_violations(restricted_scan(dg, faces, range(-hm, hm + 1)), f0)
    reps = [make_report(f"scan_{k}_violations", v, 0, 0, inputs={"faces": faces, "hmax": hm, "configs": scan["configs"]}) for k, v in scan.items() if k != "configs"]
    n_mc = int(p["mc_configs"])
    if n_mc:
        every = int(p["snapshot_every"])
        burn = int(p["burn_in"])
        _check_sweeps(cfg, burn + n_mc * every)
        dg_mc = dual(build_square_lattice(int(p["mc_L"])))
        spec = ChainSpec(sweeps=burn + n_mc * every, burn_in=burn, seed=cfg.seed, snapshot_every=every)
        res = sample_zuf(dg_mc, gaussian(float(p["lam"])), spec)
        mc = loop_bound_violations(iter_configs(dg_mc, res), dg_mc.site_at(0.5, 0.5))
        inp = {"L": int(p["mc_L"]), "lam": float(p["lam"]), "configs": mc["configs"]}
        reps += [make_report(f"mc_{k}_violations", v, 0, 0, inputs=inp) for k, v in mc.items() if k != "configs"]
    return Outcome(reps)


def _key_bound(cfg: ExperimentConfig) -> Outcome:
    from .exact import spin_correlation_exact
    from .graph import dual
    from .loops import event_probabilities, path_edge_family
    from .potential import gaussian

    p = cfg.params
    g = build_graph(cfg.graph)
    dg = dual(g)
    fam = path_edge_family(g, int(p["max_len"]))
    reps = []
    rows = []
    for beta in p["betas"]:
        beta = float(beta)
        P, tail = event_probabilities(dg, gaussian(1.0 / beta), fam, p["qs"], K=int(p["K"]))
        corr: dict = {}
        worst = (math.inf, None)
        for i, (gamma, e) in enumerate(fam):
            xy = (gamma[-1], gamma[0])
            if xy not in corr:
                corr[xy] = spin_correlation_exact(g, "villain", beta, *xy)
            for j, q in enumerate(p["qs"]):
                rows.append([beta, i, q, corr[xy], P[i, j]])
                if corr[xy] - P[i, j] < worst[0]:
                    worst = (corr[xy] - P[i, j], (list(gamma), list(e), q))
        rep = make_report("key_bound_exact", 0.0, worst[0], 1e-12, tail, {"beta": beta, "family": len(fam), "qs": p["qs"]}, worst_case=worst[1])
        reps.append(rep)
        if p["mc"]:
            reps.append(_key_bound_mc(cfg, beta))
    return Outcome(reps, {"key_bound": (["beta", "pair", "q", "correlation", "probability"], rows)})


def _key_bound_mc(cfg: ExperimentConfig, beta: float) -> CheckReport:
    from .graph import build_square_lattice, dual
    from .loops import quadrant_paths
    from .mc import ChainSpec, estimate_key_bound

    p = cfg.params
    g = build_square_lattice(int(p["mc_L"]))
    dg = dual(g)
    f0 = dg.site_at(0.5, 0.5)
    gamma, e = quadrant_paths(dg, f0, 1)[0][1]
    _check_sweeps(cfg, int(p["sweeps"]))
    base = dict(sweeps=int(p["sweeps"]), burn_in=int(p["burn_in"]), seed=cfg.seed)
    res = estimate_key_bound(g, dg, beta, gamma, e, ChainSpec(model="villain", beta=beta, **base), ChainSpec(snapshot_every=10, **base))
    lhs, lse = res["lhs"]
    worst = max(m - 3 * se for m, se in res["rhs_fixed_q"].values())
    return CheckReport("key_bound_mc", worst, lhs + 3 * lse, lhs + 3 * lse - worst, 0.0, not res["violation"], 0.0, {"beta": beta, "L": int(p["mc_L"])}, {k: list(v) if isinstance(v, tuple) else v for k, v in res.items() if k != "rhs_fixed_q"} | {"rhs_fixed_q": {k: list(v) for k, v in res["rhs_fixed_q"].items()}})


def _check_sweeps(cfg: ExperimentConfig, sweeps: int) -> None:
    cap = int(cfg.budget.get("max_sweeps", 10**7))
    if sweeps > cap:
        raise BudgetError(f"{sweeps} sweeps exceed the budget of {cap}")


def _depinning(cfg: ExperimentConfig) -> Outcome:
    from .mc import ChainSpec, depinning_scan, depinning_trends

    p = cfg.params
    _check_sweeps(cfg, int(p["sweeps"]))
    spec = ChainSpec(sweeps=int(p["sweeps"]), burn_in=int(p["burn_in"]), seed=cfg.seed, chains=int(p["chains"]))
    lams = sorted(float(x) for x in p["lams"])
    table = depinning_scan(p["Ls"], lams, spec)
    tr = depinning_trends(table)
    reps = []
    lo, hi = lams[0], lams[-1]
    reps.append(make_report("variance_grows_weak_coupling", 0, int(tr["growing"][lo]), 0, inputs={"lam": lo}))
    reps.append(make_report("variance_flat_strong_coupling", 0, int(tr["flat"][hi]), 0, inputs={"lam": hi}))
    for L, ok in tr["monotone_in_lam"].items():
        reps.append(make_report(f"variance_monotone_in_lam_L{L}", 0, int(ok), 0, inputs={"L": L}))
    for r in reps:
        r.passed = r.rhs >= 1
    rows = [[r["L"], r["lam"], r["mean"], r["se"]] for r in table]
    return Outcome(reps, {"depinning": (["L", "lam", "mean_n0_squared", "stderr"], rows)})


def _simon_lieb(cfg: ExperimentConfig) -> Outcome:
    from .exact import simon_lieb_check

    p = cfg.params
    g = build_graph(cfg.graph, default_kind="path")
    reps = []
    for model in p["models"]:
        for b in p["betas"]:
            reps.append(simon_lieb_check(g, model, float(b), int(p["x"]), int(p["y"]), p["separator"], tol=float(p["tol"])))
    return Outcome(reps)


def _surgery(cfg: ExperimentConfig) -> Outcome:
    from .exact import split_marginal_check, surgery_fluctuations
    from .graph import PlanarGraph, build_square_lattice, degree_reduce, dual

    p = cfg.params
    lam, tol = float(p["lam"]), float(p["tol"])
    pos = np.array([(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)], dtype=float)
    two_face = PlanarGraph.from_geometry(pos, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)])
    reps = [split_marginal_check(dual(two_face).graph, lam, int(p["r"]), tol=tol)]
    g = build_square_lattice(int(p["L"]))
    red, _ = degree_reduce(g)
    deg = int(red.degree().max())
    reps.append(make_report("reduced_max_degree", deg, 3, 0, inputs={"L": int(p["L"])}))
    free_edge = ~(red.boundary[red.edges[:, 0]] & red.boundary[red.edges[:, 1]])
    spread = float(np.abs(red.coupling[free_edge] - 3.0).max())
    reps.append(make_report("reduced_couplings_tripled", spread, 0.0, 1e-12, inputs={"L": int(p["L"])}))
    x = int(np.flatnonzero((np.abs(g.pos) < 1e-9).all(axis=1))[0])
    vals, steps = surgery_fluctuations(g, lam, x, tol=tol)
    for r in steps:
        r.details.update(vals)
    return Outcome(reps + steps)


def _metric_xy(cfg: ExperimentConfig) -> Outcome:
    from .exact import spin_correlation_exact
    from .mc import ChainSpec, metric_xy_refinement

    p = cfg.params
    g = build_graph(cfg.graph, default_kind="two-vertex")
    beta = float(p["beta"])
    _check_sweeps(cfg, int(p["sweeps"]))
    spec = ChainSpec(model="xy", beta=beta, sweeps=int(p["sweeps"]), burn_in=int(p["burn_in"]), seed=cfg.seed, chains=int(p["chains"]))
    target = spin_correlation_exact(g, "villain", beta, 0, 1)
    rows, errs = [], []
    for N in p["Ns"]:
        est = metric_xy_refinement(g, beta, int(N), spec, [(0, 1)])
        m, se = est["estimates"][(0, 1)]
        rows.append([int(N), m, se, target])
        errs.append((abs(m - target), se))
    reps = []
    dec = all(b[0] < a[0] + 3 * math.hypot(a[1], b[1]) for a, b in zip(errs[:-1], errs[1:]))
    reps.append(make_report("metric_xy_error_decreasing", 0, int(dec), 0, inputs={"beta": beta, "Ns": p["Ns"]}))
    reps[-1].passed = dec
    err, se = errs[-1]
    reps.append(make_report("metric_xy_final_error", err, 0.01 + 3 * se, 0.0, inputs={"beta": beta, "N": int(p["Ns"][-1])}, villain=target))
    return Outcome(reps, {"metric_xy": (["N", "xy_estimate", "stderr", "villain_exact"], rows)})


def _bernstein(cfg: ExperimentConfig) -> Outcome:
    from .potential import bernstein_check, bessel_addition_check, characteristic_positivity, parse_potential, power

    p = cfg.params
    U = parse_potential(cfg.potential) if cfg.potential else power(1.0, 1.5)
    reps = [bessel_addition_check(2, 0, 1.0, 1.5)]
    if U.kind not in ("gaussian", "power"):
        # Bessel weights are positive-definite by construction; only G_U is checked
        return Outcome(reps + [characteristic_positivity(U)])
    r = bernstein_check(U, int(p["k_max"]), tol=float(p["tol"]))
    worst = min(m + r.tol * s for m, s in zip(r.min_signed, r.scales))
    rep = CheckReport("bernstein", 0.0, worst, worst, r.tol, r.passed, 0.0, {"potential": U.label(), "k_max": r.k_max}, {"offending": [list(o) for o in r.offending], "min_signed": list(r.min_signed)})
    reps.insert(0, rep)
    if r.passed:
        reps.append(characteristic_positivity(U))
    return Outcome(reps)


RUNNERS = {
    "duality": _duality,
    "rsd": _rsd,
    "stiffness": _stiffness,
    "loops": _loops,
    "key-bound": _key_bound,
    "depinning": _depinning,
    "simon-lieb": _simon_lieb,
    "surgery": _surgery,
    "metric-xy": _metric_xy,
    "bernstein": _bernstein,
}


# -- running ----------------------------------------------------------------------------


def execute(cfg: ExperimentConfig, inject: tuple = ()) -> Outcome:
    """Run one experiment in-process and return its reports."""
    old = network.MAX_INTERMEDIATE
    if "max_intermediate" in cfg.budget:
        network.MAX_INTERMEDIATE = float(cfg.budget["max_intermediate"])
    try:
        if "stiffness-tol" in inject and cfg.kind == "stiffness":
            cfg = copy.deepcopy(cfg)
            cfg.params["tol"] = -abs(float(cfg.params["tol"]))
        return RUNNERS[cfg.kind](cfg)
    finally:
        network.MAX_INTERMEDIATE = old


def write_outputs(cfg, out: Outcome, out_dir, name: str | None = None) -> Path:
    """Write the JSON report and CSV tables; ``cfg`` may be a list for merged suite members."""
    cfgs = cfg if isinstance(cfg, list) else [cfg]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or cfgs[0].kind
    kinds = sorted({c.kind for c in cfgs})
    config = cfgs[0].to_dict() if len(cfgs) == 1 else [c.to_dict() for c in cfgs]
    doc = {
        "schema": SCHEMA,
        "experiment": kinds[0] if len(kinds) == 1 else kinds,
        "statement": " / ".join(STATEMENTS[k] for k in kinds),
        "config": config,
        "config_digest": digest(config),
        "seed": cfgs[0].seed,
        "pass": all(r.passed for r in out.reports),
        "reports": [r.to_dict() for r in out.reports],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / f"{name}.json"
    path.write_text(dumps(doc) + "\n")
    for tname, (header, rows) in out.tables.items():
        with open(out_dir / f"{name}-{tname}.csv", "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def run(cfg: ExperimentConfig, out_dir=None, inject: tuple = ()) -> int:
    try:
        out = execute(cfg, inject)
    except BudgetError as err:
        print(f"budget exceeded: {err}", file=sys.stderr)
        return EXIT_BUDGET
    write_outputs(cfg, out, out_dir or cfg.out)
    for r in out.reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in out.reports) else EXIT_FAIL


# -- suites -----------------------------------------------------------------------------


def _suite_configs(name: str, seed: int) -> list[tuple[str, list[dict]]]:
    """Suite members; the full suite has one member per acceptance criterion."""
    L1_paths = [[0, 1], [0, 1, 2], [0, 3, 4], [0, 1, 4], [0, 1, 2, 5], [0, 3, 4, 5]]
    smoke = [
        ("duality", [{"kind": "duality", "params": {"betas": [1.0], "paths": [[0, 3, 4], [0, 1, 4]]}}]),
        ("rsd", [{"kind": "rsd", "params": {"instances": 5, "annealed": 2, "domination": 2}}]),
        ("stiffness", [{"kind": "stiffness", "params": {"instances": 5}}]),
        ("loops", [{"kind": "loops", "params": {"scan_faces": 3, "mc_configs": 0}}]),
        ("key-bound", [{"kind": "key-bound", "params": {"max_len": 3, "qs": [-0.5, 0.5]}}]),
        ("simon-lieb", [{"kind": "simon-lieb", "graph": {"kind": "path", "n": 4}, "params": {"betas": [1.0]}}]),
        ("surgery", [{"kind": "surgery"}]),
        ("bernstein", [{"kind": "bernstein", "potential": "power:l=1.0,a=1.5"}]),
    ]
    if name == "smoke":
        cfgs = smoke
    elif name == "full":
        cfgs = [
            ("01-duality", [{"kind": "duality", "graph": {"kind": "square", "L": L}} for L in (1, 2)]),
            ("02-correlation-duality", [{"kind": "duality", "params": {"betas": [1.0], "paths": L1_paths}}]),
            ("03-stiffness", [{"kind": "stiffness", "graph": {"kind": "square", "L": 2}, "potential": u, "params": {"instances": 50}}
                              for u in ("gaussian:l=0.5", "gaussian:l=1.0", "gaussian:l=2.0", "bessel:b=1.0", "bessel:b=2.0")]),
            ("04-rsd", [{"kind": "rsd", "params": {"instances": 100, "annealed": 20}}]),
            ("05-key-bound", [{"kind": "key-bound", "params": {"betas": [1.0, 3.0], "mc": True}}]),
            ("06-loops", [{"kind": "loops"}]),
            ("07-gaussian-domination", [{"kind": "rsd", "params": {"instances": 0, "annealed": 0, "domination": 20}}]),
            ("08-surgery", [{"kind": "surgery", "params": {"L": 2}}]),
            ("09-simon-lieb", [{"kind": "simon-lieb", "graph": {"kind": "path", "n": 4}},
                               {"kind": "simon-lieb", "graph": {"kind": "star", "n": 4}, "params": {"x": 1, "y": 2, "separator": [0]}}]),
            ("10-metric-xy", [{"kind": "metric-xy"}]),
            ("11-depinning", [{"kind": "depinning", "params": {"Ls": [2, 4, 8, 16], "lams": [0.2, 5.0], "sweeps": 40000}}]),
            ("12-bernstein", [{"kind": "bernstein", "potential": f"power:l=1.0,a={a}"} for a in (1.0, 1.5)]
                             + [{"kind": "bernstein", "potential": u} for u in ("gaussian:l=1.0", "bessel:b=1.0")]),
        ]
    else:
        raise ConfigError(f"unknown suite {name!r}")
    return [(n, [{**c, "seed": seed} for c in cs]) for n, cs in cfgs]


def _suite_member(args) -> tuple[str, str, float]:
    name, datas, out_dir, inject = args
    t0 = time.perf_counter()
    cfgs = [parse_config(d) for d in datas]
    merged = Outcome([])
    try:
        for k, cfg in enumerate(cfgs):
            out = execute(cfg, inject)
            merged.reports += out.reports
            for tname, table in out.tables.items():
                merged.tables[tname if len(cfgs) == 1 else f"{tname}{k}"] = table
    except BudgetError:
        return name, "BUDGET", time.perf_counter() - t0
    write_outputs(cfgs, merged, out_dir, name)
    return name, "PASS" if all(r.passed for r in merged.reports) else "FAIL", time.perf_counter() - t0


def suite(name: str, out_dir="out", seed: int = 0, threads: int = 1, inject: tuple = ()) -> int:
    """Run a predeclared battery and print one line per member."""
    jobs = [(n, c, out_dir, tuple(inject)) for n, c in _suite_configs(name, seed)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_suite_member, jobs))
    else:
        results = [_suite_member(j) for j in jobs]
    for n, status, dt in results:
        print(f"{status:6s} {n:24s} {dt:8.2f}s")
    statuses = {s for _, s, _ in results}
    if "FAIL" in statuses:
        return EXIT_FAIL
    if "BUDGET" in statuses:
        return EXIT_BUDGET
    return EXIT_OK


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="heightspin", description="Run height/spin verification experiments.")
    ap.add_argument("--config", default=_env("CONFIG"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=_env("OUT"))
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--suite", default=_env("SUITE"), choices=["smoke", "full"])
    ap.add_argument("--inject", action="append", default=[], help="fault injection for suite self-tests (stiffness-tol)")
    args = ap.parse_args(argv)
    try:
        seed = args.seed if args.seed is not None else int(_env("SEED") or 0)
        threads = args.threads if args.threads is not None else int(_env("THREADS") or 1)
    except ValueError:
        print("config error: seed and threads must be integers", file=sys.stderr)
        return EXIT_CONFIG
    if seed < 0 or threads < 1:
        print("config error: seed must be >= 0 and threads >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.suite:
        return suite(args.suite, args.out or "out", seed, threads, tuple(args.inject))
    if not args.config:
        print("config error: --config or --suite is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None or _env("SEED"):
        cfg.seed = seed
    return run(cfg, args.out, tuple(args.inject))


if __name__ == "__main__":
    sys.exit(main())
