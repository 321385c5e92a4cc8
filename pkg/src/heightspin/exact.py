"""Exact sums for integer height models and angle models on small graphs.

Height sums run over a window ``[lo - K, hi + K]`` around the pinned values
and report the relative weight of the outermost shell as a tail estimate.
Angle integrals use the trapezoid rule on a uniform grid, which is
spectrally accurate for the smooth periodic integrands involved.  Both are
evaluated by tensor contraction (see :mod:`heightspin.network`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .graph import DualGraph, GraphError, PlanarGraph, SiteGraph
from .network import BudgetError, PairwiseNetwork
from .potential import Potential, gaussian, log_bessel_ratio, villain_log_weight, villain_truncation
from .report import CheckReport, make_report

TAIL_TARGET = 1e-8
TAIL_WARN = 1e-6
K_MAX = 20


class ConstraintError(ValueError):
    pass


class TailWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Constraints:
    """Pinned values, equal-value groups and real-valued sites of a height model.

    ``clamp`` maps site index to a fixed integer.  ``equal`` lists groups of
    sites forced to share a value; the ground index may appear in a group.
    Sites in ``continuous`` range over the reals (integrated by quadrature)
    instead of the integers.
    """

    clamp: dict = field(default_factory=dict)
    equal: tuple = ()
    boundary_value: int = 0
    continuous: frozenset = frozenset()
    step: float = 0.125


class PartitionResult(NamedTuple):
    value: float
    tail: float
    K: int


def as_sites(obj) -> SiteGraph:
    if isinstance(obj, SiteGraph):
        return obj
    if isinstance(obj, (DualGraph, PlanarGraph)):
        return obj.sites()
    raise TypeError(f"expected a graph, got {type(obj).__name__}")


def edge_potentials(sg: SiteGraph, U) -> list[Potential]:
    """One potential per edge; a single potential is scaled by each coupling."""
    if isinstance(U, Potential):
        return [U.scaled(J) for J in sg.coupling]
    pots = list(U)
    if len(pots) != len(sg.edges):
        raise ValueError("need one potential per edge")
    return pots


# -- height models -----------------------------------------------------------------


class _HeightNet:
    def __init__(self, sg: SiteGraph, pots, K: int, cons: Constraints, shifts=None, tilt=None):
        n = sg.n
        parent = list(range(n + 1))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for grp in cons.equal:
            grp = [int(s) for s in grp]
            for s in grp:
                if not 0 <= s <= n:
                    raise ConstraintError(f"site {s} out of range")
            for s in grp[1:]:
                parent[find(s)] = find(grp[0])
        fixed: dict[int, int] = {find(n): int(cons.boundary_value)}
        for s, val in cons.clamp.items():
            s = int(s)
            if not 0 <= s <= n:
                raise ConstraintError(f"site {s} out of range")
            r = find(s)
            if r in fixed and fixed[r] != int(val):
                raise ConstraintError("conflicting pinned values")
            fixed[r] = int(val)
        lo, hi = min(fixed.values()), max(fixed.values())
        cont_roots = {find(int(s)) for s in cons.continuous}
        if cont_roots & set(fixed):
            raise ConstraintError("a real-valued site cannot be pinned")
        roots = sorted({find(s) for s in range(n)} - set(fixed))
        self.var_of_root = {r: i for i, r in enumerate(roots)}
        self.values = []
        self.qweights = []
        for r in roots:
            if r in cont_roots:
                h = cons.step
                m = int(round((hi - lo + 2 * K) / h))
                self.values.append(lo - K + h * np.arange(m + 1))
                self.qweights.append(np.full(m + 1, h))
            else:
                self.values.append(np.arange(lo - K, hi + K + 1, dtype=float))
                self.qweights.append(None)
        self.find = find
        self.fixed = fixed
        self.log_scalar = 0.0
        net = PairwiseNetwork([len(v) for v in self.values])
        for i, w in enumerate(self.qweights):
            if w is not None:
                net.add_unary(i, w)
        for e, (a, b) in enumerate(sg.edges):
            s = 0.0 if shifts is None else float(shifts[e])
            U = pots[e]
            ra, rb = find(int(a)), find(int(b))
            if ra in fixed and rb in fixed:
                self.log_scalar -= float(U(fixed[rb] - fixed[ra] + s))
            elif ra in fixed:
                vb = self.values[self.var_of_root[rb]]
                net.add_unary(self.var_of_root[rb], np.exp(-U(vb - fixed[ra] + s)))
            elif rb in fixed:
                va = self.values[self.var_of_root[ra]]
                net.add_unary(self.var_of_root[ra], np.exp(-U(fixed[rb] - va + s)))
            elif ra == rb:
                self.log_scalar -= float(U(s))
            else:
                ia, ib = self.var_of_root[ra], self.var_of_root[rb]
                va, vb = self.values[ia], self.values[ib]
                net.add_pair(ia, ib, np.exp(-U(vb[None, :] - va[:, None] + s)))
        for site, t in (tilt or {}).items():
            r = find(int(site))
            if r in fixed:
                self.log_scalar += float(t) * fixed[r]
            else:
                i = self.var_of_root[r]
                net.add_unary(i, np.exp(float(t) * self.values[i]))
        self.net = net

    def site_values(self, site: int):
        r = self.find(int(site))
        if r in self.fixed:
            return None, self.fixed[r]
        i = self.var_of_root[r]
        return i, self.values[i]

    def total(self) -> float:
        return math.exp(self.log_scalar) * self.net.contract()


def _check_K(K: int) -> None:
    if K < 1:
        raise ValueError("window K must be at least 1")


def _partition(sg, pots, K, cons, shifts=None, tilt=None) -> PartitionResult:
    z = _HeightNet(sg, pots, K, cons, shifts, tilt).total()
    z_in = _HeightNet(sg, pots, K - 1, cons, shifts, tilt).total()
    tail = max(0.0, (z - z_in) / z) if z > 0 else 1.0
    return PartitionResult(z, tail, K)


def zuf_partition(dg, U, constraints: Constraints | None = None, K: int = 8, escalate: bool = True, shifts=None, tilt=None) -> PartitionResult:
    """Partition function of the integer-valued field with edge potential U.

    The boundary class is pinned to ``constraints.boundary_value``.  With
    ``escalate`` the window grows by 4 (up to 20) until the tail estimate is
    below 1e-8; a final tail above 1e-6 raises a :class:`TailWarning`.
    """
    _check_K(K)
    sg = as_sites(dg)
    pots = edge_potentials(sg, U)
    cons = constraints or Constraints()
    res = _partition(sg, pots, K, cons, shifts, tilt)
    while escalate and res.tail >= TAIL_TARGET and res.K + 4 <= K_MAX:
        res = _partition(sg, pots, res.K + 4, cons, shifts, tilt)
    if res.tail > TAIL_WARN:
        warnings.warn(f"truncation tail {res.tail:.2e} at K={res.K}", TailWarning, stacklevel=2)
    return res


@dataclass
class Marginal:
    values: list
    prob: np.ndarray
    tail: float

    def expect(self, f) -> float:
        grids = np.meshgrid(*self.values, indexing="ij") if self.values else []
        return float(np.sum(self.prob * f(*grids)))


def height_marginal(dg, U, sites: Sequence[int], constraints: Constraints | None = None, K: int = 8, shifts=None, tilt=None) -> Marginal:
    """Joint law of the heights at ``sites`` (free or pinned)."""
    _check_K(K)
    sg = as_sites(dg)
    pots = edge_potentials(sg, U)
    cons = constraints or Constraints()
    hn = _HeightNet(sg, pots, K, cons, shifts, tilt)
    open_vars, vals = [], []
    for s in sites:
        i, v = hn.site_values(s)
        if i is None:
            vals.append(np.array([float(v)]))
            continue
        if i in open_vars:
            raise ConstraintError("requested sites share one variable")
        open_vars.append(i)
        vals.append(v)
    table = np.asarray(hn.net.contract(open_vars) if open_vars else hn.net.contract(), dtype=float)
    prob = table.reshape([len(v) for v in vals])
    total = prob.sum()
    z_in = _HeightNet(sg, pots, K - 1, cons, shifts, tilt).total()
    z = math.exp(hn.log_scalar) * total
    tail = max(0.0, (z - z_in) / z) if z > 0 else 1.0
    return Marginal(vals, prob / total, tail)


def height_mgf(dg, U, v: dict, constraints: Constraints | None = None, K: int = 10) -> PartitionResult:
    """E[exp(sum_s v_s n_s)] and the larger of the two tail estimates."""
    num = zuf_partition(dg, U, constraints, K, escalate=False, tilt=v)
    den = zuf_partition(dg, U, constraints, K, escalate=False)
    return PartitionResult(num.value / den.value, max(num.tail, den.tail), K)


# -- angle models ------------------------------------------------------------------


def _spin_graph(g) -> tuple[int, np.ndarray, np.ndarray]:
    if isinstance(g, PlanarGraph):
        return g.n_vertices, g.edges, g.coupling
    n, edges, coupling = g
    return int(n), np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.asarray(coupling, dtype=float)


def quadrature_points(model: str, beta: float, coupling: float, degree: int, tol_exp: float = 36.0) -> int:
    """Grid size whose aliasing error is below exp(-tol_exp) per vertex.

    Aliasing needs the edge Fourier modes at a vertex to add up to a
    multiple of the grid size Q.  The largest such term puts about Q/d on
    each of the d edges.  For the Villain weight that term is
    exp(-Q^2 / (2 beta J d)); for the XY weight it is
    (I_{Q/d}(beta J) / I_0(beta J))^d.
    """
    d = max(int(degree), 1)
    bj = beta * coupling
    Q = 8
    while Q < 4096:
        k = math.ceil(Q / d)
        if model == "villain":
            bound = -(Q * Q) / (2 * bj * d)
        else:
            bound = d * float(log_bessel_ratio(k, bj)) if bj > 0 else -math.inf
        if bound < -tol_exp:
            return Q
        Q += 4
    raise BudgetError("no affordable quadrature grid")


def _edge_matrix(model: str, diff: np.ndarray, bj: float, M: int | None) -> tuple[np.ndarray, float]:
    """Edge weight on the grid divided by exp(shift), and the shift."""
    if model == "xy":
        return np.exp(bj * (np.cos(diff) - 1.0)), bj
    if model == "villain":
        lw = villain_log_weight(diff, bj, M)
        top = float(lw.max())
        return np.exp(lw - top), top
    raise ValueError(f"unknown model {model!r}")


class _SpinNet:
    def __init__(self, g, model: str, beta: float, Q: int | None, M: int | None = None, gauge: int | None = 0, normalized: bool = False):
        n, edges, coupling = _spin_graph(g)
        if beta < 0:
            raise ValueError("beta must be non-negative")
        if n == 0:
            raise GraphError("empty graph")
        if Q is None:
            deg = np.bincount(edges.ravel(), minlength=n) if len(edges) else np.zeros(n, dtype=int)
            Jmax = float(coupling.max()) if len(coupling) else 1.0
            Q = 64 if n <= 5 else quadrature_points(model, max(beta, 1e-9), Jmax, int(deg.max()) if n else 1)
        if Q < 8:
            raise ValueError("quad_points must be at least 8")
        self.Q = Q
        self.theta = 2 * np.pi * np.arange(Q) / Q
        diff = self.theta[:, None] - self.theta[None, :]
        net = PairwiseNetwork([Q] * n)
        log_scalar = 0.0
        for (u, v), J in zip(edges, coupling):
            if beta == 0:
                continue
            if model == "villain":
                Mv = M if M is not None else villain_truncation(beta * J)
                W, shift = _edge_matrix(model, diff, beta * J, Mv)
                if normalized:
                    shift += 0.5 * math.log(beta * J / (2 * math.pi))
            else:
                W, shift = _edge_matrix(model, diff, beta * J, None)
            net.add_pair(int(u), int(v), W)
            log_scalar += shift
        if model == "villain" and beta == 0:
            raise ValueError("the Villain weight needs beta > 0")
        h = 2 * np.pi / Q
        if gauge is not None:
            delta = np.zeros(Q)
            delta[0] = 1.0
            net.add_unary(gauge, delta)
            # one angle is fixed; the global rotation contributes 2 pi
            log_scalar += (n - 1) * math.log(h) + (0.0 if normalized else math.log(2 * math.pi))
        else:
            log_scalar += n * math.log(h)
        self.net = net
        self.log_scalar = log_scalar
        self.n = n


def villain_partition(g, beta: float, quad_points: int | None = None, M: int | None = None, normalized: bool = False) -> float:
    """Villain partition function by trapezoid quadrature with one angle fixed.

    The edge weight is sum_m exp(-beta J (phi + 2 pi m)^2 / 2) with the image
    sum cut at ``M`` (default: tail below 1e-14).  With ``normalized`` each
    weight is the heat kernel (scaled to integrate to one over the circle)
    and the global rotation is divided out; in that convention
    ``(2 pi)^(#bounded faces) * Z`` equals the dual integer Gaussian sum.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    s = _SpinNet(g, "villain", beta, quad_points, M, gauge=0, normalized=normalized)
    return math.exp(s.log_scalar) * s.net.contract()


def xy_partition(g, beta: float, quad_points: int | None = None) -> float:
    """XY partition function  int prod_e exp(beta J cos(theta_u - theta_v)) dtheta."""
    s = _SpinNet(g, "xy", beta, quad_points, gauge=0)
    return math.exp(s.log_scalar) * s.net.contract()


def spin_correlation_exact(g, model: str, beta: float, x: int, y: int, quad_points: int | None = None, M: int | None = None) -> float:
    """<cos(theta_x - theta_y)> for the XY or Villain model."""
    if x == y:
        return 1.0
    if beta == 0:
        return 0.0
    s = _SpinNet(g, model, beta, quad_points, M, gauge=x)
    marg = np.asarray(s.net.contract([y]))
    return float(np.dot(marg, np.cos(s.theta)) / marg.sum())


# -- duality and defects ----------------------------------------------------------------


def defect_shifts(dg: DualGraph, gamma: Sequence[int]) -> np.ndarray:
    """Unit flow along the primal path ``gamma`` seen on dual edges.

    A dual edge gets +1 when it is the counter-clockwise quarter turn of a
    step of ``gamma`` (dual edges run from right face to left face).
    """
    g = dg.primal
    s = np.zeros(g.n_edges)
    for a, b in zip(gamma[:-1], gamma[1:]):
        h = g.half_edge(int(a), int(b))
        s[h // 2] += 1.0 if h % 2 == 0 else -1.0
    return s


def villain_dual_potentials(dg: DualGraph, beta: float) -> list[Potential]:
    """Dual Gaussian potentials: coupling J on a primal edge gives lam = 1/(beta J)."""
    return [gaussian(1.0 / (beta * J)) for J in dg.coupling]


def defect_expectation(dg: DualGraph, lam: float, gamma: Sequence[int], sign: int = 1, K: int = 8) -> PartitionResult:
    """E[T] where T = exp(lam/2 (||grad n||^2 - ||grad n + sign * flow||^2)).

    ``lam`` is the uniform Gaussian coupling on dual edges of coupling one;
    edges with other couplings use ``lam / J``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    pots = [gaussian(lam / J) for J in dg.coupling]
    shifts = sign * defect_shifts(dg, gamma)
    if not np.any(shifts):
        return PartitionResult(1.0, 0.0, K)
    num = zuf_partition(dg, pots, K=K, shifts=shifts)
    den = zuf_partition(dg, pots, K=K)
    return PartitionResult(num.value / den.value, max(num.tail, den.tail), max(num.K, den.K))


def duality_check(g: PlanarGraph, beta: float, K: int = 12, quad_points: int | None = None, tol: float = 1e-6) -> CheckReport:
    """(2 pi)^(#bounded faces) Z_Villain (normalized) against the dual Gaussian sum."""
    from .graph import dual

    dg = dual(g)
    zv = villain_partition(g, beta, quad_points, normalized=True)
    zz = zuf_partition(dg, villain_dual_potentials(dg, beta), K=K)
    lhs = (2 * math.pi) ** dg.n_sites * zv
    rel = abs(lhs - zz.value) / zz.value
    return CheckReport(
        "villain_zgf_duality", lhs, zz.value, -rel, tol, bool(rel <= tol), zz.tail,
        {"L_vertices": g.n_vertices, "beta": beta}, {"relative_error": rel, "K": zz.K},
    )


def correlation_duality_check(g: PlanarGraph, beta: float, gamma: Sequence[int], quad_points: int | None = None, K: int = 10, tol: float = 1e-6) -> CheckReport:
    from .graph import dual

    dg = dual(g)
    y, x = int(gamma[0]), int(gamma[-1])
    lhs = spin_correlation_exact(g, "villain", beta, x, y, quad_points)
    plus = defect_expectation(dg, 1.0 / beta, gamma, +1, K)
    minus = defect_expectation(dg, 1.0 / beta, gamma, -1, K)
    rel = abs(lhs - plus.value) / abs(lhs)
    return CheckReport(
        "correlation_duality", lhs, plus.value, -rel, tol, bool(rel <= tol and abs(plus.value - minus.value) <= 1e-9),
        max(plus.tail, minus.tail), {"gamma": list(map(int, gamma)), "beta": beta},
        {"minus": minus.value, "relative_error": rel},
    )


# -- stiffness -------------------------------------------------------------------------


def stiffness_check(dg, U, A: Sequence[int], B: Sequence[int], F_A: Sequence[int], F_B: Sequence[int], K: int = 8, tol: float = 1e-12) -> CheckReport:
    """Ratio Z(F_A - 1, F_B) / Z(F_A, F_B) >= 1 under the stiffness condition.

    The boundary class belongs to B with value 0.
    """
    sg = as_sites(dg)
    A, B = [int(a) for a in A], [int(b) for b in B]
    F_A, F_B = [int(f) for f in F_A], [int(f) for f in F_B]
    if len(A) != len(F_A) or len(B) != len(F_B):
        raise ValueError("one value per site is required")
    if set(A) & set(B) or sg.ground in A or sg.ground in B:
        raise ConstraintError("A and B must be disjoint sets of free sites")
    if A and min(F_A) - 1 < max(F_B + [0]):
        raise ConstraintError("stiffness condition min F_A - 1 >= max F_B fails")
    if not A:
        return make_report("stiffness", 1.0, 1.0, tol)
    pots = edge_potentials(sg, U)
    clamp_hi = dict(zip(A, F_A)) | dict(zip(B, F_B))
    clamp_lo = dict(zip(A, [f - 1 for f in F_A])) | dict(zip(B, F_B))
    z_hi = zuf_partition(sg, pots, Constraints(clamp=clamp_hi), K=K)
    z_lo = zuf_partition(sg, pots, Constraints(clamp=clamp_lo), K=K)
    ratio = z_lo.value / z_hi.value
    rep = CheckReport(
        "stiffness", 1.0 - tol, ratio, ratio - (1.0 - tol), tol, bool(ratio >= 1.0 - tol),
        max(z_hi.tail, z_lo.tail), {"A": A, "B": B, "F_A": F_A, "F_B": F_B, "U": _ulabel(U)}, {"ratio": ratio},
    )
    rep.slack = ratio - 1.0
    rep.passed = bool(ratio - 1.0 >= -tol)
    return rep


def _ulabel(U) -> str:
    return U.label() if isinstance(U, Potential) else "per-edge"


# -- Gaussian domination -------------------------------------------------------------


def gaussian_domination_check(dg, lam: float, v, K: int = 10, eps=(0.5, 0.25), tol: float = 1e-9) -> list[CheckReport]:
    """MGF and moment bounds of the integer Gaussian field by its Gaussian counterpart.

    ``v`` maps free sites to weights.  Checks
    E[exp(<v,n>)] <= exp(<v, G v> / (2 lam)) with G the inverse Dirichlet
    Laplacian, and E[|<v,n>|^(1/e)]^e <= Gamma(1 + 1/(2e))^e sqrt(2 <v,Gv>/lam).
    """
    sg = as_sites(dg)
    v = {int(k): float(t) for k, t in dict(v).items() if t != 0.0}
    if not v:
        raise ValueError("v must be non-zero")
    vec = np.zeros(sg.n)
    for s, t in v.items():
        vec[s] = t
    G = np.linalg.inv(sg.laplacian())
    var = float(vec @ G @ vec)
    U = gaussian(lam)
    mgf = height_mgf(sg, U, v, K=K)
    rhs = math.exp(var / (2 * lam))
    out = [make_report("gaussian_domination_mgf", mgf.value, rhs, tol * rhs, mgf.tail, {"v": v, "lam": lam})]
    sites = sorted(v)
    marg = height_marginal(sg, U, sites, K=K)
    weights = np.array([v[s] for s in sites])
    for e in eps:
        p = 1.0 / e
        moment = marg.expect(lambda *ns: np.abs(sum(w * n for w, n in zip(weights, ns))) ** p)
        lhs = moment**e
        D = math.gamma(1 + 1 / (2 * e)) ** e
        bound = D * math.sqrt(2 * var / lam)
        out.append(make_report(f"gradient_moment_eps_{e}", lhs, bound, tol * bound, marg.tail, {"v": v, "lam": lam, "eps": e}))
    return out


# -- Simon-Lieb ------------------------------------------------------------------------


def simon_lieb_check(g: PlanarGraph, model: str, beta: float, x: int, y: int, separator: Sequence[int], quad_points: int | None = None, tol: float = 1e-8) -> CheckReport:
    """<s_x s_y> <= sum_u <s_x s_u>_Lambda <s_u s_y> <= sum_u <s_x s_u> <s_u s_y>.

    Lambda is the separator together with everything reachable from ``x``
    without crossing it; the middle sum uses the model restricted to Lambda.
    """
    sep = sorted(set(int(u) for u in separator))
    if not sep:
        raise ValueError("separator must be non-empty")
    n, edges, coupling = _spin_graph(g)
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, w in edges:
        adj[u].append(int(w))
        adj[w].append(int(u))
    lam = set(sep)
    if x not in lam:
        stack = [x]
        seen = {x}
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if b in lam or b in seen:
                    continue
                seen.add(b)
                stack.append(b)
        lam |= seen
    if y in lam:
        raise ValueError("separator does not separate x from y")
    keep = sorted(lam)
    idx = {v: i for i, v in enumerate(keep)}
    sub_edges = [(idx[int(a)], idx[int(b)]) for a, b in edges if int(a) in lam and int(b) in lam]
    sub_coup = [J for (a, b), J in zip(edges, coupling) if int(a) in lam and int(b) in lam]
    sub = (len(keep), np.array(sub_edges, dtype=np.int64).reshape(-1, 2), np.array(sub_coup))
    lhs = spin_correlation_exact(g, model, beta, x, y, quad_points)
    mid = 0.0
    rhs = 0.0
    for u in sep:
        c_uy = spin_correlation_exact(g, model, beta, u, y, quad_points)
        c_xu_sub = spin_correlation_exact(sub, model, beta, idx[x], idx[u], quad_points)
        c_xu = spin_correlation_exact(g, model, beta, x, u, quad_points)
        mid += c_xu_sub * c_uy
        rhs += c_xu * c_uy
    slack = min(mid - lhs, rhs - mid)
    return CheckReport(
        f"simon_lieb_{model}", lhs, rhs, slack, tol, bool(slack >= -tol), 0.0,
        {"x": x, "y": y, "separator": sep, "beta": beta, "model": model}, {"middle": mid},
    )


def random_stiffness_instance(rng: np.random.Generator, n_sites: int, max_value: int = 2) -> dict:
    """Disjoint random A, B with values obeying min F_A - 1 >= max(F_B, 0)."""
    perm = rng.permutation(n_sites)
    na = int(rng.integers(1, max(2, n_sites // 2) + 1))
    nb = int(rng.integers(0, n_sites - na + 1))
    A = sorted(int(s) for s in perm[:na])
    B = sorted(int(s) for s in perm[na : na + nb])
    F_B = [int(f) for f in rng.integers(-max_value, max_value + 1, size=len(B))]
    floor = max(F_B + [0]) + 1
    F_A = [int(f) for f in floor + rng.integers(0, max_value + 1, size=len(A))]
    return {"A": A, "B": B, "F_A": F_A, "F_B": F_B}


# -- surgery -----------------------------------------------------------------------------


def split_marginal_check(g: PlanarGraph, lam: float, r: int = 2, K: int = 8, tol: float = 1e-9) -> CheckReport:
    """Splitting every edge into r real-valued links of coupling r*lam keeps
    the joint law of the original sites.

    Compares the exact joint marginal of all original free vertices before
    and after subdivision; slack is minus the largest probability difference.
    """
    from .graph import subdivide_edges

    if r < 1:
        raise ValueError("r must be positive")
    sub = subdivide_edges(g, [float(r)] * r)
    sg0, sg1 = g.sites(), sub.sites()
    verts = [int(v) for v in sg0.labels]
    s0 = [g.site_index(v) for v in verts]
    s1 = [sub.site_index(v) for v in verts]
    mids = frozenset(sub.site_index(v) for v in np.flatnonzero(sub.mediating))
    U = gaussian(lam)
    m0 = height_marginal(sg0, U, s0, K=K)
    m1 = height_marginal(sg1, U, s1, Constraints(continuous=mids), K=K)
    if m0.prob.shape != m1.prob.shape:
        raise ValueError("marginal windows differ")
    diff = float(np.abs(m0.prob - m1.prob).max())
    return make_report("split_marginal", diff, 0.0, tol, max(m0.tail, m1.tail), {"lam": lam, "r": r, "n_sites": len(verts)}, max_abs_diff=diff)


def surgery_fluctuations(g: PlanarGraph, lam: float, x: int, K: int = 6, tol: float = 1e-9) -> tuple[dict, list[CheckReport]]:
    """E[n_x^2] along the degree reduction: original model, integer
    subdivided model, and the merged model computed both on the reduced
    graph and as equality constraints on the subdivided one.
    """
    from .graph import degree_reduce

    red, rec = degree_reduce(g)
    U = gaussian(lam)
    sq = lambda v: v.astype(float) ** 2  # noqa: E731
    sub = rec.subdivided
    e0 = height_marginal(g.sites(), U, [g.site_index(x)], K=K)
    e2 = height_marginal(sub.sites(), U, [sub.site_index(x)], K=K)
    groups = [tuple(sub.site_index(v) for v in grp) for grp in rec.groups]
    e3 = height_marginal(sub.sites(), U, [sub.site_index(x)], Constraints(equal=tuple(groups)), K=K)
    e3r = height_marginal(red.sites(), U, [red.site_index(int(rec.vertex_map[x]))], K=K)
    vals = {
        "original": e0.expect(sq),
        "integer_subdivided": e2.expect(sq),
        "merged": e3.expect(sq),
        "merged_reduced_graph": e3r.expect(sq),
    }
    tail = max(m.tail for m in (e0, e2, e3, e3r))
    reps = [
        make_report("surgery_step2", vals["integer_subdivided"], vals["original"], tol, tail, {"lam": lam, "x": x}),
        make_report("surgery_step3", vals["merged"], vals["integer_subdivided"], tol, tail, {"lam": lam, "x": x}),
    ]
    return vals, reps
