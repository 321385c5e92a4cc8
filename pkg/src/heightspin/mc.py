"""Seeded Monte Carlo for integer heights and O(2) spins.

Random numbers come from numpy generators spawned off one master
``SeedSequence`` (one stream per chain) and are handed to compiled sweep
kernels in chunks, so a chain is bit-reproducible from its seed no matter
how the chunks fall.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .exact import _spin_graph, as_sites, edge_potentials
from .graph import DualGraph, PlanarGraph
from .loops import HeightConfig, explore
from .potential import Potential, gaussian, villain_truncation
from .report import digest, dumps

TABLE_HALF = 512
BUFFER = 4096
# relative weight below which the conditional window stops growing
TAIL_GAP = 36.0
CHUNK_UPDATES = 1 << 22
TUNE_EVERY = 50


class MCError(RuntimeError):
    pass


@dataclass
class ChainSpec:
    """Run parameters of one Markov chain (or several independent copies)."""

    model: str = "zuf"
    sweeps: int = 10_000
    burn_in: int = 1_000
    thin: int = 1
    seed: int = 0
    K: int = 6
    width: float = 1.0
    beta: float = 1.0
    M: int | None = None
    chains: int = 1
    random_scan: bool = False
    snapshot_every: int = 0

    def __post_init__(self) -> None:
        if self.model not in ("zuf", "xy", "villain"):
            raise MCError(f"unknown model {self.model!r}")
        if not self.sweeps > self.burn_in >= 0:
            raise MCError("need sweeps > burn_in >= 0")
        if self.thin < 1 or self.chains < 1 or self.K < 1:
            raise MCError("thin, chains and K must be positive")
        if self.model != "zuf" and not self.beta > 0:
            raise MCError("beta must be positive")

    def streams(self) -> list[np.random.Generator]:
        """One generator per chain, split from the master seed."""
        return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(self.seed).spawn(self.chains)]

    def digest(self) -> str:
        return digest(asdict(self))


@dataclass
class SpinConfig:
    angles: np.ndarray
    graph: object = None

    def __post_init__(self) -> None:
        self.angles = wrap(np.asarray(self.angles, dtype=float))


def wrap(theta):
    """Map angles to [-pi, pi)."""
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


@dataclass
class ChainResult:
    names: list[str]
    samples: np.ndarray
    snapshots: np.ndarray | None = None
    acceptance: float = 1.0
    width: float = 0.0
    chain_of_sample: np.ndarray | None = None
    snapshot_chain: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    def estimate(self, name: str, f=None, n_batches: int = 20) -> tuple[float, float]:
        x = self.series(name)
        if f is not None:
            x = f(x)
        return batch_means(x, n_batches, self.chain_of_sample)

    def write_csv(self, path, f=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "observable", "value"])
            for k, row in enumerate(self.samples):
                for name, v in zip(self.names, row):
                    w.writerow([k, name, format(float(v if f is None else f(v)), ".17g")])


def batch_means(x, n_batches: int = 20, chain_of_sample=None) -> tuple[float, float]:
    """Mean and standard error by non-overlapping batch means.

    With several chains each chain is cut into ``n_batches`` batches of its
    own; batches never straddle two chains.
    """
    x = np.asarray(x, dtype=float)
    if n_batches < 2:
        raise MCError("need at least two batches")
    groups = [x] if chain_of_sample is None else [x[chain_of_sample == c] for c in np.unique(chain_of_sample)]
    means = []
    for xs in groups:
        b = len(xs) // n_batches
        if b == 0:
            raise MCError("too few samples for batch means")
        means.append(xs[: b * n_batches].reshape(n_batches, b).mean(axis=1))
    means = np.concatenate(means)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(len(means)))


# -- kernels ----------------------------------------------------------------------------


@njit(cache=True)
def _heat_bath(state, order, nb_ptr, nb_idx, nb_tab, tables, K, unif, buf, stats):
    D = TABLE_HALF
    for k in range(order.shape[0]):
        x = order[k]
        a, b = nb_ptr[x], nb_ptr[x + 1]
        lo = state[nb_idx[a]]
        hi = lo
        for j in range(a, b):
            v = state[nb_idx[j]]
            lo = min(lo, v)
            hi = max(hi, v)
        # energies on the neighbor hull; the conditional mode lies inside it
        emin = 1e300
        for v in range(lo, hi + 1):
            e = 0.0
            for j in range(a, b):
                d = v - state[nb_idx[j]]
                e += tables[nb_tab[j], d + D]
            buf[v - lo + BUFFER // 2] = e
            if e < emin:
                emin = e
        top = hi
        while True:
            v = top + 1
            e = 0.0
            for j in range(a, b):
                d = v - state[nb_idx[j]]
                if d > D:
                    return -1
                e += tables[nb_tab[j], d + D]
            if v - lo + BUFFER // 2 >= BUFFER:
                return -2
            buf[v - lo + BUFFER // 2] = e
            top = v
            if v - hi >= K and e - emin > TAIL_GAP:
                break
        bot = lo
        while True:
            v = bot - 1
            e = 0.0
            for j in range(a, b):
                d = v - state[nb_idx[j]]
                if d < -D:
                    return -1
                e += tables[nb_tab[j], d + D]
            if v - lo + BUFFER // 2 < 0:
                return -2
            buf[v - lo + BUFFER // 2] = e
            bot = v
            if lo - v >= K and e - emin > TAIL_GAP:
                break
        tot = 0.0
        for v in range(bot, top + 1):
            w = math.exp(emin - buf[v - lo + BUFFER // 2])
            buf[v - lo + BUFFER // 2] = w
            tot += w
        edge = (buf[top - lo + BUFFER // 2] + buf[bot - lo + BUFFER // 2]) / tot
        if edge > stats[0]:
            stats[0] = edge
        r = unif[k] * tot
        acc = 0.0
        new = top
        for v in range(bot, top + 1):
            acc += buf[v - lo + BUFFER // 2]
            if r < acc:
                new = v
                break
        state[x] = new
    return 0


@njit(cache=True)
def _pair_logw(model, d, bj, M):
    if model == 0:
        return bj * math.cos(d)
    d = (d + math.pi) % (2 * math.pi) - math.pi
    top = -0.5 * bj * d * d
    s = 0.0
    for m in range(-M, M + 1):
        t = d + 2 * math.pi * m
        s += math.exp(-0.5 * bj * t * t - top)
    return top + math.log(s)


@njit(cache=True)
def _metropolis(state, order, nb_ptr, nb_idx, nb_bj, model, M, width, unif):
    acc = 0
    for k in range(order.shape[0]):
        x = order[k]
        old = state[x]
        new = old + width * (2.0 * unif[k, 0] - 1.0)
        new = (new + math.pi) % (2 * math.pi) - math.pi
        dl = 0.0
        for j in range(nb_ptr[x], nb_ptr[x + 1]):
            y = state[nb_idx[j]]
            dl += _pair_logw(model, new - y, nb_bj[j], M) - _pair_logw(model, old - y, nb_bj[j], M)
        if dl >= 0.0 or unif[k, 1] < math.exp(dl):
            state[x] = new
            acc += 1
    return acc


def _csr(n: int, edges: np.ndarray, free: int):
    """Neighbor lists of the first ``free`` vertices in compressed form."""
    nb: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, (a, b) in enumerate(edges):
        a, b = int(a), int(b)
        if a == b:
            continue
        nb[a].append((b, k))
        nb[b].append((a, k))
    ptr = np.zeros(free + 1, dtype=np.int64)
    idx, eid = [], []
    for x in range(free):
        ptr[x + 1] = ptr[x] + len(nb[x])
        for y, k in nb[x]:
            idx.append(y)
            eid.append(k)
    return ptr, np.array(idx, dtype=np.int64), np.array(eid, dtype=np.int64)


def _orders(rng: np.random.Generator, n: int, sweeps: int, random_scan: bool) -> np.ndarray:
    if random_scan:
        return rng.integers(0, n, size=sweeps * n).astype(np.int64)
    return np.tile(np.arange(n, dtype=np.int64), sweeps)


def _chunks(total: int, per_sweep: int):
    step = max(1, CHUNK_UPDATES // max(per_sweep, 1))
    s = 0
    while s < total:
        yield s, min(step, total - s)
        s += step


# -- height chains -----------------------------------------------------------------------


def _zuf_tables(sg, U):
    pots = edge_potentials(sg, U)
    keys: dict = {}
    tab_rows = []
    edge_tab = np.zeros(len(pots), dtype=np.int64)
    d = np.arange(-TABLE_HALF, TABLE_HALF + 1)
    for k, p in enumerate(pots):
        key = (p.kind, p.lam, p.beta, p.alpha, p.scale, None if p.table is None else tuple(np.asarray(p.table).tolist()))
        if key not in keys:
            keys[key] = len(tab_rows)
            tab_rows.append(np.asarray(p(d), dtype=float))
        edge_tab[k] = keys[key]
    return np.array(tab_rows), edge_tab


def sample_zuf(dg, U: Potential, spec: ChainSpec, observe: Sequence[int] = ()) -> ChainResult:
    """Single-site heat-bath chains for heights with boundary value zero.

    Records the heights of the ``observe`` sites after every ``thin``-th
    sweep past burn-in; with ``spec.snapshot_every`` it also keeps full
    configurations.
    """
    if spec.model != "zuf":
        raise MCError("sample_zuf needs a zuf chain spec")
    sg = as_sites(dg)
    n = sg.n
    tables, edge_tab = _zuf_tables(sg, U)
    ptr, idx, eid = _csr(n + 1, sg.edges, n)
    nb_tab = edge_tab[eid]
    observe = [int(s) for s in observe]
    rows, snaps, chain_ids, snap_ids = [], [], [], []
    edge_mass = np.zeros(1)
    buf = np.zeros(BUFFER)
    for c, rng in enumerate(spec.streams()):
        state = np.zeros(n + 1, dtype=np.int64)
        for start, m in _chunks(spec.sweeps, n):
            order = _orders(rng, n, m, spec.random_scan)
            unif = rng.random(m * n)
            for s in range(m):
                sl = slice(s * n, (s + 1) * n)
                code = _heat_bath(state, order[sl], ptr, idx, nb_tab, tables, spec.K, unif[sl], buf, edge_mass)
                if code:
                    raise MCError("height range exceeded the potential table")
                sweep = start + s
                if sweep >= spec.burn_in and (sweep - spec.burn_in) % spec.thin == 0:
                    rows.append(state[observe].copy())
                    chain_ids.append(c)
                    if spec.snapshot_every and (sweep - spec.burn_in) % spec.snapshot_every == 0:
                        snaps.append(state[:n].copy())
                        snap_ids.append(c)
    return ChainResult(
        [f"n[{s}]" for s in observe],
        np.array(rows, dtype=np.int64).reshape(len(rows), len(observe)),
        np.array(snaps, dtype=np.int64) if snaps else None,
        chain_of_sample=np.array(chain_ids),
        snapshot_chain=np.array(snap_ids) if snaps else None,
        meta={"conditional_edge_mass": float(edge_mass[0]), "spec_digest": spec.digest()},
    )


def iter_configs(dg: DualGraph, result: ChainResult) -> Iterator[HeightConfig]:
    if result.snapshots is None:
        return
    for row in result.snapshots:
        yield HeightConfig(dg, row)


# -- spin chains -------------------------------------------------------------------------


def sample_spins(g, spec: ChainSpec, pairs: Sequence[tuple[int, int]] = ()) -> ChainResult:
    """Metropolis chains for XY or Villain spins on all vertices of ``g``.

    The proposal half-width is tuned during burn-in towards acceptance in
    [0.3, 0.6] and frozen afterwards.  Records cos(theta_x - theta_y) for
    each pair.
    """
    if spec.model not in ("xy", "villain"):
        raise MCError("sample_spins needs an xy or villain chain spec")
    n, edges, coupling = _spin_graph(g)
    ptr, idx, eid = _csr(n, edges, n)
    bj = spec.beta * coupling[eid]
    model = 0 if spec.model == "xy" else 1
    M = 0
    if model == 1:
        M = spec.M if spec.M is not None else villain_truncation(spec.beta * float(coupling.min()))
    pairs = [(int(a), int(b)) for a, b in pairs]
    pa = np.array([a for a, _ in pairs], dtype=np.int64)
    pb = np.array([b for _, b in pairs], dtype=np.int64)
    rows, chain_ids = [], []
    acc_total, tried = 0, 0
    widths = []
    for c, rng in enumerate(spec.streams()):
        state = np.zeros(n)
        width = float(spec.width)
        win_acc = 0
        for start, m in _chunks(spec.sweeps, n):
            order = _orders(rng, n, m, spec.random_scan)
            unif = rng.random((m * n, 2))
            for s in range(m):
                sl = slice(s * n, (s + 1) * n)
                a = _metropolis(state, order[sl], ptr, idx, bj, model, M, width, unif[sl])
                sweep = start + s
                if sweep < spec.burn_in:
                    win_acc += a
                    if (sweep + 1) % TUNE_EVERY == 0:
                        rate = win_acc / (TUNE_EVERY * n)
                        if not 0.3 <= rate <= 0.6:
                            width = float(np.clip(width * (rate + 0.05) / 0.5, 1e-3, np.pi))
                        win_acc = 0
                    continue
                acc_total += a
                tried += n
                if (sweep - spec.burn_in) % spec.thin == 0:
                    rows.append(np.cos(state[pa] - state[pb]))
                    chain_ids.append(c)
        widths.append(width)
    return ChainResult(
        [f"cos[{a},{b}]" for a, b in pairs],
        np.array(rows).reshape(len(rows), len(pairs)),
        acceptance=acc_total / max(tried, 1),
        width=float(np.mean(widths)),
        chain_of_sample=np.array(chain_ids),
        meta={"M": M, "spec_digest": spec.digest()},
    )


def heat_bath_conditional(U: Potential, neighbors: Sequence[int], K: int = 6, couplings=None) -> tuple[np.ndarray, np.ndarray]:
    """Exact single-site conditional used by the height sampler (support, probabilities)."""
    nb = np.asarray(neighbors, dtype=np.int64)
    J = np.ones(len(nb)) if couplings is None else np.asarray(couplings, dtype=float)
    pots = [U.scaled(j) for j in J]

    def energy(v):
        return sum(float(p(np.array([v - y]))[0]) for p, y in zip(pots, nb))

    lo, hi = int(nb.min()), int(nb.max())
    emin = min(energy(v) for v in range(lo, hi + 1))
    top = hi
    while True:
        top += 1
        if top - hi >= K and energy(top) - emin > TAIL_GAP:
            break
    bot = lo
    while True:
        bot -= 1
        if lo - bot >= K and energy(bot) - emin > TAIL_GAP:
            break
    vals = np.arange(bot, top + 1)
    w = np.exp(emin - np.array([energy(v) for v in vals]))
    return vals, w / w.sum()


# -- studies -----------------------------------------------------------------------------


def subdivided_path_graph(g, N: int) -> tuple[tuple[int, np.ndarray, np.ndarray], int]:
    """Each edge becomes a path of N edges carrying N times its coupling.

    Original vertices keep their indices; returns the graph tuple and the
    original vertex count.
    """
    n, edges, coupling = _spin_graph(g)
    new_edges, new_J = [], []
    nxt = n
    for (a, b), J in zip(edges, coupling):
        chain = [int(a)] + list(range(nxt, nxt + N - 1)) + [int(b)]
        nxt += N - 1
        for u, v in zip(chain[:-1], chain[1:]):
            new_edges.append((u, v))
            new_J.append(J * N)
    return (nxt, np.array(new_edges, dtype=np.int64), np.array(new_J)), n


def metric_xy_refinement(g, beta: float, N: int, spec: ChainSpec, pairs: Sequence[tuple[int, int]]) -> dict:
    """XY correlations of original vertices on the N-fold subdivided graph."""
    if N not in (1, 2, 4, 8, 16):
        raise MCError("N must be one of 1, 2, 4, 8, 16")
    sub, _ = subdivided_path_graph(g, N)
    s = ChainSpec(**{**asdict(spec), "model": "xy", "beta": beta})
    res = sample_spins(sub, s, pairs)
    out = {}
    for name, p in zip(res.names, pairs):
        out[tuple(p)] = res.estimate(name)
    return {"N": N, "estimates": out, "acceptance": res.acceptance}


def estimate_key_bound(g: PlanarGraph, dg: DualGraph, beta: float, gamma: Sequence[int], e: tuple[int, int], spin_spec: ChainSpec, height_spec: ChainSpec, qs: Sequence[float] | None = None) -> dict:
    """Paired estimates of the Villain correlation of (x, y) and of the
    exploration event probabilities at fixed q and summed over q.

    A violation is flagged only if LHS + 3 se < RHS - 3 se.
    """
    x, y = int(gamma[-1]), int(gamma[0])
    spins = sample_spins(g, ChainSpec(**{**asdict(spin_spec), "model": "villain", "beta": beta}), [(x, y)])
    lhs, lhs_se = spins.estimate(spins.names[0])
    hs = ChainSpec(**{**asdict(height_spec), "model": "zuf", "snapshot_every": max(1, height_spec.snapshot_every)})
    heights = sample_zuf(dg, gaussian(1.0 / beta), hs, observe=())
    configs = list(iter_configs(dg, heights))
    chains = heights.snapshot_chain
    if qs is None:
        qs = [-1.5, -0.5, 0.5, 1.5]
    fixed = {q: np.zeros(len(configs)) for q in qs}
    for k, h in enumerate(configs):
        for q in qs:
            fixed[q][k] = explore(h, gamma, e, q).success
    summed = _summed_indicator(configs, gamma, e)
    rows = {}
    flagged = False
    for q in qs:
        m, se = batch_means(fixed[q], 20, chains)
        rows[str(q)] = (m, se)
        flagged |= lhs + 3 * lhs_se < m - 3 * se
    ms, ses = batch_means(summed, 20, chains)
    return {
        "lhs": (lhs, lhs_se),
        "rhs_fixed_q": rows,
        "rhs_summed": (ms, ses),
        "violation": bool(flagged),
        "acceptance": spins.acceptance,
    }


def _summed_indicator(configs: list[HeightConfig], gamma, e) -> np.ndarray:
    """Sum over all half-integers q of the event indicator per configuration."""
    from .loops import _ctx, half_integers_between

    out = np.zeros(len(configs))
    for k, h in enumerate(configs):
        ctx = _ctx(h.dg)
        h0 = ctx.g.half_edge(int(e[0]), int(e[1]))
        n = h.full()
        levels = half_integers_between(int(n[ctx.right[h0]]), int(n[ctx.left[h0]])) if n[ctx.left[h0]] > n[ctx.right[h0]] else []
        out[k] = sum(explore(h, gamma, e, q).success for q in levels)
    return out


def depinning_scan(Ls: Sequence[int], lams: Sequence[float], spec: ChainSpec, U_kind: str = "gaussian") -> list[dict]:
    """E[n_0^2] at the face next to the origin for each box size and coupling."""
    from .graph import build_square_lattice, dual
    from .potential import parse_potential

    Ls = [int(L) for L in Ls]
    if Ls != sorted(Ls) or len(set(Ls)) != len(Ls):
        raise MCError("box sizes must be increasing")
    table = []
    for lam in lams:
        U = gaussian(lam) if U_kind == "gaussian" else parse_potential(U_kind.format(lam=lam))
        for L in Ls:
            dg = dual(build_square_lattice(L))
            f0 = dg.site_at(0.5, 0.5)
            res = sample_zuf(dg, U, spec, observe=[f0])
            m, se = res.estimate(res.names[0], lambda v: v.astype(float) ** 2)
            table.append({"L": L, "lam": float(lam), "mean": m, "se": se, "edge_mass": res.meta["conditional_edge_mass"]})
    return table


def depinning_trends(table: list[dict], z: float = 3.0) -> dict:
    """Growth and flatness verdicts per coupling, and monotonicity in coupling per size."""
    by_lam: dict = {}
    for row in table:
        by_lam.setdefault(row["lam"], []).append(row)
    out = {"growing": {}, "flat": {}, "monotone_in_lam": {}}
    for lam, rows in by_lam.items():
        rows = sorted(rows, key=lambda r: r["L"])
        grow = all(b["mean"] - z * b["se"] > a["mean"] + z * a["se"] for a, b in zip(rows[:-1], rows[1:]))
        flat = all(abs(b["mean"] - a["mean"]) <= z * math.hypot(a["se"], b["se"]) for a, b in zip(rows[:-1], rows[1:]))
        out["growing"][lam] = grow
        out["flat"][lam] = flat
    sizes = sorted({r["L"] for r in table})
    for L in sizes:
        rows = sorted((r for r in table if r["L"] == L), key=lambda r: r["lam"])
        out["monotone_in_lam"][L] = all(b["mean"] <= a["mean"] + z * math.hypot(a["se"], b["se"]) for a, b in zip(rows[:-1], rows[1:]))
    return out


def write_manifest(path, spec: ChainSpec, graph_digest: str, extra: dict | None = None) -> None:
    Path(path).write_text(dumps({"spec": asdict(spec), "spec_digest": spec.digest(), "seed": spec.seed, "graph_digest": graph_digest, **(extra or {})}))
