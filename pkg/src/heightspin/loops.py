"""Level lines of height functions on faces, and the exploration process.

A height function assigns an integer to every bounded face of a planar
graph; the unbounded face carries the boundary value.  For a half-integer
``q`` an oriented primal half-edge is a ``q``-line when the face on its
left is above ``q`` and the face on its right is below.  At a vertex each
incoming line leaves along the first outgoing line met when turning
counter-clockwise from the reversed incoming edge, i.e. the sharpest right
turn, so lines never cross.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .graph import DualGraph, GraphError
from .network import BudgetError


class LoopError(ValueError):
    pass


@dataclass
class HeightConfig:
    dg: DualGraph
    values: np.ndarray
    boundary_value: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.int64).reshape(-1)
        if len(self.values) != self.dg.n_sites:
            raise LoopError("one height per bounded face is required")

    def full(self) -> np.ndarray:
        """Heights indexed by dual vertex, ground included."""
        return np.append(self.values, self.boundary_value)


class _Ctx:
    """Flat lists for fast walks on the primal graph of a dual graph."""

    def __init__(self, dg: DualGraph):
        g = dg.primal
        E = g.n_edges
        self.rot_next = g.rot_next.tolist()
        self.origin = g.origin.tolist()
        left = [0] * (2 * E)
        right = [0] * (2 * E)
        for e in range(E):
            r, l = int(dg.edges[e, 0]), int(dg.edges[e, 1])
            left[2 * e], right[2 * e] = l, r
            left[2 * e + 1], right[2 * e + 1] = r, l
        self.left = left
        self.right = right
        self.n_half = 2 * E
        self.dual_edges = dg.edges.tolist()
        self.n_sites = dg.n_sites
        nb: list[list[tuple[int, int]]] = [[] for _ in range(dg.n_sites + 1)]
        for e, (a, b) in enumerate(self.dual_edges):
            nb[a].append((b, e))
            nb[b].append((a, e))
        self.dual_nb = nb
        self.g = g
        self.vertex_at = {(round(p[0], 6), round(p[1], 6)): i for i, p in enumerate(g.pos)}


def _ctx(dg: DualGraph) -> _Ctx:
    c = getattr(dg, "_loop_ctx", None)
    if c is None:
        c = _Ctx(dg)
        dg._loop_ctx = c
    return c


def _check_q(q: float) -> float:
    q = float(q)
    if not math.isclose(q - math.floor(q), 0.5):
        raise LoopError("q must be a half-integer")
    return q


def winding(ctx: _Ctx, cycle: Sequence[int]) -> list[int]:
    """Winding number of a closed chain of half-edges around every dual site.

    Crossing a chain half-edge from its right face to its left face adds one.
    The boundary class has winding zero.
    """
    delta = {}
    for h in cycle:
        e = h >> 1
        delta[e] = delta.get(e, 0) + (1 if h % 2 == 0 else -1)
    w = [None] * (ctx.n_sites + 1)
    w[ctx.n_sites] = 0
    dq = deque([ctx.n_sites])
    while dq:
        a = dq.popleft()
        for b, e in ctx.dual_nb[a]:
            if w[b] is not None:
                continue
            d = delta.get(e, 0)
            # dual edge e runs from right(2e) to left(2e)
            w[b] = w[a] + (d if ctx.dual_edges[e][1] == b else -d)
            dq.append(b)
    return w


@dataclass
class Loop:
    half_edges: list[int]
    orientation: int
    interior: frozenset

    def vertices(self, ctx_or_dg) -> list[int]:
        ctx = ctx_or_dg if isinstance(ctx_or_dg, _Ctx) else _ctx(ctx_or_dg)
        return [ctx.origin[h] for h in self.half_edges]


@dataclass
class LevelLineSet:
    q: float
    loops: list[Loop]
    open_lines: list = field(default_factory=list)


def _is_line(ctx: _Ctx, n, h: int, q: float) -> bool:
    return n[ctx.left[h]] > q > n[ctx.right[h]]


def _turn(ctx: _Ctx, n, h: int, q: float) -> int:
    """Outgoing line chosen at the head of incoming line ``h``."""
    t = h ^ 1
    c = ctx.rot_next[t]
    while c != t:
        if n[ctx.left[c]] > q > n[ctx.right[c]]:
            return c
        c = ctx.rot_next[c]
    raise LoopError("incoming line has no outgoing partner")


def extract_level_lines(h: HeightConfig, q: float) -> LevelLineSet:
    """All closed q-contours with orientation and enclosed faces."""
    q = _check_q(q)
    ctx = _ctx(h.dg)
    n = h.full().tolist()
    used = [False] * ctx.n_half
    loops = []
    for start in range(ctx.n_half):
        if used[start] or not _is_line(ctx, n, start, q):
            continue
        cyc = []
        c = start
        while not used[c]:
            used[c] = True
            cyc.append(c)
            c = _turn(ctx, n, c, q)
        if c != start:
            raise LoopError("contour did not close")
        w = winding(ctx, cyc)
        inside = frozenset(i for i in range(ctx.n_sites) if w[i] != 0)
        orient = int(np.sign(sum(w[i] for i in inside))) if inside else 0
        loops.append(Loop(cyc, orient, inside))
    return LevelLineSet(q, loops)


def count_loops(h: HeightConfig, f: int, q: float, orientation: int) -> int:
    """Number of q-loops of the given orientation that surround site ``f``."""
    if not 0 <= f < h.dg.n_sites:
        raise LoopError("f must be a bounded face")
    if orientation not in (1, -1):
        raise LoopError("orientation is +1 or -1")
    return sum(1 for lp in extract_level_lines(h, q).loops if lp.orientation == orientation and f in lp.interior)


def half_integers_between(a: int, b: int) -> list[float]:
    lo, hi = min(a, b), max(a, b)
    return [k + 0.5 for k in range(lo, hi)]


def loop_height_counts(h: HeightConfig, f: int) -> tuple[int, int]:
    """(positive loops at q > 0 plus negative loops at q < 0 around f, |n_f|)."""
    full = h.full()
    lo, hi = int(full.min()), int(full.max())
    total = 0
    for q in half_integers_between(lo, hi):
        total += count_loops(h, f, q, 1 if q > 0 else -1)
    return total, abs(int(h.values[f]))


def loop_height_counts_all(h: HeightConfig) -> tuple[np.ndarray, np.ndarray]:
    """:func:`loop_height_counts` for every face at once."""
    full = h.full()
    counts = np.zeros(h.dg.n_sites, dtype=np.int64)
    for q in half_integers_between(int(full.min()), int(full.max())):
        want = 1 if q > 0 else -1
        for lp in extract_level_lines(h, q).loops:
            if lp.orientation == want:
                counts[list(lp.interior)] += 1
    return counts, np.abs(h.values)


def crossing_counts(h: HeightConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per primal edge, the number of level lines through it and |n_l - n_r|."""
    ctx = _ctx(h.dg)
    full = h.full()
    counts = np.zeros(ctx.n_half // 2, dtype=np.int64)
    for q in half_integers_between(int(full.min()), int(full.max())):
        for lp in extract_level_lines(h, q).loops:
            for he in lp.half_edges:
                counts[he >> 1] += 1
    diff = np.array([abs(int(full[a]) - int(full[b])) for a, b in ctx.dual_edges], dtype=np.int64)
    return counts, diff


# -- exploration ------------------------------------------------------------------------


@dataclass
class ExplorationResult:
    success: bool
    kappa: list[int]
    low_set: frozenset
    high_set: frozenset
    q_used: float | None
    revealed: list[int]


def _explore_fixed(ctx: _Ctx, n, gamma: list[int], x: int, y: int, h0: int, q: float, revealed: list[int], seen: set):
    def reveal(site: int) -> None:
        if site not in seen:
            seen.add(site)
            revealed.append(site)

    reveal(ctx.left[h0])
    reveal(ctx.right[h0])
    if n[ctx.right[h0]] > q or n[ctx.left[h0]] < q:
        return False, [x]
    on_gamma = set(gamma)
    kappa = [x]
    chain = [h0]
    cur = h0
    while True:
        v = ctx.origin[cur ^ 1]
        kappa.append(v)
        # contours resolved by the turn rule never cross themselves, so a
        # revisited vertex is a touching point of a simple curve
        if v in on_gamma:
            break
        if len(chain) > ctx.n_half:
            raise LoopError("contour did not close")
        t = cur ^ 1
        c = ctx.rot_next[t]
        reveal(ctx.left[t])
        while True:
            if c == t:
                raise LoopError("incoming line has no outgoing partner")
            reveal(ctx.left[c])
            if n[ctx.left[c]] > q > n[ctx.right[c]]:
                break
            c = ctx.rot_next[c]
        chain.append(c)
        cur = c
    if kappa[-1] != y:
        return False, kappa
    g = ctx.g
    loop = list(chain) + [g.half_edge(a, b) for a, b in zip(gamma[:-1], gamma[1:])]
    w = winding(ctx, loop)
    inside = [x_ for x_ in w[: ctx.n_sites] if x_ != 0]
    if not inside or any(abs(x_) != 1 for x_ in inside):
        return False, kappa
    orient = 1 if inside[0] > 0 else -1
    return orient == (1 if q > 0 else -1), kappa


def explore(h: HeightConfig, gamma: Sequence[int], e: tuple[int, int], q_rule="argmax") -> ExplorationResult:
    """Follow the level line entering through ``e`` until it meets ``gamma``.

    ``gamma`` runs from y to x and ``e = (x, x')`` leaves its last vertex.
    With a numeric ``q_rule`` the level is fixed; with ``"argmax"`` the
    admissible levels between the heights on either side of ``e`` are tried
    in order of increasing |q| and the first success is kept.
    """
    ctx = _ctx(h.dg)
    gamma = [int(v) for v in gamma]
    if len(gamma) < 1 or len(set(gamma)) != len(gamma):
        raise LoopError("gamma must be a simple path")
    x, y = gamma[-1], gamma[0]
    if int(e[0]) != x:
        raise LoopError("e must start at the end of gamma")
    if int(e[1]) in gamma:
        raise LoopError("e must leave gamma")
    g = ctx.g
    for a, b in zip(gamma[:-1], gamma[1:]):
        g.half_edge(a, b)
    h0 = g.half_edge(x, int(e[1]))
    n = h.full().tolist()
    revealed: list[int] = []
    seen: set = set()
    if q_rule == "argmax":
        lo, hi = n[ctx.right[h0]], n[ctx.left[h0]]
        seen.update((ctx.left[h0], ctx.right[h0]))
        revealed.extend([ctx.left[h0], ctx.right[h0]])
        levels = sorted(half_integers_between(lo, hi) if hi > lo else [], key=lambda s: (abs(s), -s))
        kappa = [x]
        for q in levels:
            ok, kappa = _explore_fixed(ctx, n, gamma, x, y, h0, q, revealed, seen)
            if ok:
                return _result(True, kappa, q, revealed, n)
        return _result(False, kappa, None, revealed, n)
    q = _check_q(q_rule)
    ok, kappa = _explore_fixed(ctx, n, gamma, x, y, h0, q, revealed, seen)
    return _result(ok, kappa, q, revealed, n)


def _result(ok, kappa, q, revealed, n) -> ExplorationResult:
    ref = q if q is not None else 0.0
    low = frozenset(s for s in revealed if n[s] < ref)
    high = frozenset(s for s in revealed if n[s] > ref)
    return ExplorationResult(ok, kappa, low, high, q, list(revealed))


def event_by_level_lines(h: HeightConfig, gamma: Sequence[int], e: tuple[int, int], q: float, lines: LevelLineSet | None = None) -> bool:
    """Independent test of the exploration event using the full contour set.

    ``lines`` may carry the precomputed q-contours of ``h``.
    """
    ctx = _ctx(h.dg)
    g = ctx.g
    gamma = [int(v) for v in gamma]
    x, y = gamma[-1], gamma[0]
    h0 = g.half_edge(x, int(e[1]))
    if lines is None:
        lines = extract_level_lines(h, q)
    elif lines.q != q:
        raise LoopError("precomputed lines are for another level")
    for lp in lines.loops:
        if h0 not in lp.half_edges:
            continue
        k = lp.half_edges.index(h0)
        seq = lp.half_edges[k:] + lp.half_edges[:k]
        on_gamma = set(gamma)
        path = [x]
        for he in seq:
            v = g.head(he)
            path.append(v)
            if v in on_gamma:
                break
        if path[-1] != y:
            return False
        chain = seq[: len(path) - 1]
        loop = chain + [g.half_edge(a, b) for a, b in zip(gamma[:-1], gamma[1:])]
        w = winding(ctx, loop)
        inside = [t for t in w[: ctx.n_sites] if t != 0]
        if not inside or any(abs(t) != 1 for t in inside):
            return False
        return (inside[0] > 0) == (q > 0)
    return False


# -- quadrant construction -------------------------------------------------------------


def quadrant_paths(dg: DualGraph, f0: int, sign: int = 1) -> list[list[tuple[list[int], tuple[int, int]]]]:
    """For each of the four quadrants cornered at the vertices of face ``f0``,
    the list of (gamma, e) pairs.  gamma runs from y on one arm through the
    corner to x on the other arm and e leaves x into the quadrant.

    For ``sign=+1`` x lies on the arm reached first when turning
    counter-clockwise from the other arm, matching positively oriented loops;
    ``sign=-1`` swaps the arms.  Needs unit-square faces with integer
    vertex coordinates.
    """
    ctx = _ctx(dg)
    g = ctx.g
    fid = int(dg.face_ids[f0])
    corners = g.pos[g.face_vertices(fid)]
    if len(corners) != 4 or not np.allclose(corners.max(axis=0) - corners.min(axis=0), 1.0):
        raise GraphError("quadrant paths need a unit square face")
    cx, cy = corners[:, 0].min(), corners[:, 1].min()
    center = np.array([cx + 0.5, cy + 0.5])

    def place(u, v, j):
        # local coordinates relative to the lower-left corner, x arm along u
        if sign < 0:
            u, v = v, u
        d = np.array([cx + u, cy + v]) - center
        for _ in range(j):
            d = np.array([-d[1], d[0]])
        p = center + d
        return ctx.vertex_at.get((round(float(p[0]), 6), round(float(p[1]), 6)))

    out = []
    for j in range(4):
        pairs = []
        a = 1
        while True:
            xs = [place(t, 0, j) for t in range(0, a + 1)]
            xp = place(a, 1, j)
            if any(v is None for v in xs) or xp is None:
                break
            b = 0
            while True:
                ys = [place(0, s, j) for s in range(b, -1, -1)]
                if any(v is None for v in ys):
                    break
                pairs.append((ys + xs[1:], (xs[-1], xp)))
                b += 1
            a += 1
        out.append(pairs)
    return out


def quadrant_event_sum(h: HeightConfig, f0: int, q: float, paths=None) -> tuple[int, int]:
    """(4 * number of sgn(q)-oriented q-loops around f0, number of successful
    quadrant explorations at level q over all quadrants and point pairs)."""
    q = _check_q(q)
    sgn = 1 if q > 0 else -1
    lhs = 4 * count_loops(h, f0, q, sgn)
    if paths is None:
        paths = quadrant_paths(h.dg, f0, sgn)
    rhs = 0
    for pairs in paths:
        for gamma, e in pairs:
            rhs += int(explore(h, gamma, e, q).success)
    return lhs, rhs


def loop_bound_violations(configs: Iterable[HeightConfig], f0: int, qs: Sequence[float] | None = None, oracle: bool = True) -> dict:
    """Count configurations breaking the loop statements.

    Per configuration: the crossing identity on every edge, the loops-to-height
    bound on every face, the quadrant bound at every level in ``qs`` (default:
    all levels between the extreme heights), and, with ``oracle``, agreement
    of each quadrant exploration with the contour-based detector.
    """
    bad = {"configs": 0, "crossing": 0, "loops_to_height": 0, "quadrant": 0, "oracle": 0}
    paths: dict = {}
    for h in configs:
        bad["configs"] += 1
        if paths == {}:
            paths = {s: quadrant_paths(h.dg, f0, s) for s in (1, -1)}
        c, d = crossing_counts(h)
        bad["crossing"] += int(np.any(c != d))
        a, b = loop_height_counts_all(h)
        bad["loops_to_height"] += int(np.any(a < b))
        full = h.full()
        levels = qs if qs is not None else half_integers_between(int(full.min()), int(full.max()))
        for q in levels:
            sgn = 1 if q > 0 else -1
            lines = extract_level_lines(h, q)
            lhs = 4 * sum(1 for lp in lines.loops if lp.orientation == sgn and f0 in lp.interior)
            rhs = 0
            for pairs in paths[sgn]:
                for gamma, e in pairs:
                    ok = explore(h, gamma, e, q).success
                    rhs += int(ok)
                    if oracle and ok != event_by_level_lines(h, gamma, e, q, lines):
                        bad["oracle"] += 1
            bad["quadrant"] += int(lhs > rhs)
    return bad


def nearest_faces(dg: DualGraph, f0: int, k: int) -> list[int]:
    """``f0`` and the k-1 faces whose centres lie nearest to it."""
    pos = dg.graph.pos[: dg.n_sites]
    d = np.hypot(*(pos - pos[f0]).T)
    order = np.lexsort((np.arange(dg.n_sites), d))
    return [int(s) for s in order[:k]]


def restricted_scan(dg: DualGraph, faces: Sequence[int], values: Sequence[int]) -> Iterator[HeightConfig]:
    """Every assignment of ``values`` to ``faces`` with all other faces at zero."""
    faces = [int(f) for f in faces]
    base = np.zeros(dg.n_sites, dtype=np.int64)
    for combo in itertools.product([int(v) for v in values], repeat=len(faces)):
        n = base.copy()
        n[faces] = combo
        yield HeightConfig(dg, n)


# -- exact event probabilities ---------------------------------------------------------

MAX_ENUM_SITES = 6


def _enumerate(dg: DualGraph, U, K: int):
    sg = dg.sites()
    n = sg.n
    if n > MAX_ENUM_SITES:
        raise BudgetError(f"enumeration is limited to {MAX_ENUM_SITES} free faces")
    vals = np.arange(-K, K + 1)
    grid = np.stack(np.meshgrid(*([vals] * n), indexing="ij"), -1).reshape(-1, n)
    full = np.concatenate([grid, np.zeros((len(grid), 1), dtype=grid.dtype)], axis=1)
    energy = np.zeros(len(grid))
    for (a, b), J in zip(sg.edges, sg.coupling):
        energy += np.asarray(U.scaled(J)(full[:, b] - full[:, a]), dtype=float)
    w = np.exp(-(energy - energy.min()))
    shell = (np.abs(grid).max(axis=1) == K)
    return grid, w / w.sum(), float(w[shell].sum() / w.sum())


def event_probabilities(dg: DualGraph, U, pairs: Sequence[tuple[Sequence[int], tuple[int, int]]], qs: Sequence[float], K: int = 10) -> tuple[np.ndarray, float]:
    """Exact P[A^q] for every (gamma, e) pair and level q by enumeration.

    The event only depends on which faces lie above q, so it is evaluated
    once per sign pattern and weighted by the pattern probability.  Returns
    an array of shape (len(pairs), len(qs)) and the shell mass of the
    enumeration window.
    """
    grid, p, tail = _enumerate(dg, U, K)
    n = grid.shape[1]
    out = np.zeros((len(pairs), len(qs)))
    powers = 1 << np.arange(n)
    for j, q in enumerate(qs):
        q = _check_q(q)
        code = ((grid > q).astype(np.int64) * powers).sum(axis=1)
        mass = np.bincount(code, weights=p, minlength=1 << n)
        for pat in np.flatnonzero(mass > 0):
            rep = np.where((pat >> np.arange(n)) & 1, q + 0.5, q - 0.5).astype(np.int64)
            h = HeightConfig(dg, rep)
            for i, (gamma, e) in enumerate(pairs):
                if explore(h, gamma, e, q).success:
                    out[i, j] += mass[pat]
    return out, tail


def simple_paths(g, max_len: int) -> list[list[int]]:
    """All simple vertex paths with 1..max_len vertices."""
    adj = [[g.head(h) for h in g.rotation[v]] for v in range(g.n_vertices)]
    out = []

    def grow(path):
        out.append(list(path))
        if len(path) == max_len:
            return
        for w in adj[path[-1]]:
            if w not in path:
                path.append(w)
                grow(path)
                path.pop()

    for v in range(g.n_vertices):
        grow([v])
    return out


def path_edge_family(g, max_len: int) -> list[tuple[list[int], tuple[int, int]]]:
    """Every simple path (read from y to x) with every exit edge e=(x, x') off the path."""
    fam = []
    for gamma in simple_paths(g, max_len):
        x = gamma[-1]
        for h in g.rotation[x]:
            xp = g.head(h)
            if xp not in gamma:
                fam.append((gamma, (x, xp)))
    return fam
