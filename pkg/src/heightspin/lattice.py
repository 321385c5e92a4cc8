"""Discrete Gaussians on sublattices of Z^k and their monotonicity inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import BudgetError
from .report import CheckReport, make_report

BUDGET = 10**7
EIG_FLOOR = -1e-10


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeModel:
    """Sum over psi in a sublattice of Z^k of exp(-<psi, A psi> / 2).

    The sublattice is cut out by per-coordinate scalings (psi_i in s_i Z),
    equalities psi_i = psi_j and pinned coordinates psi_i = 0.  Sums are
    truncated to the box |psi_i| <= K.
    """

    A: np.ndarray
    scale: tuple = ()
    equal: tuple = ()
    pinned: tuple = ()
    K: int = 12
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        k = A.shape[0]
        if A.shape != (k, k) or not np.allclose(A, A.T, atol=1e-12):
            raise LatticeError("A must be a symmetric square matrix")
        if np.linalg.eigvalsh(A).min() < EIG_FLOOR:
            raise LatticeError("A must be positive semidefinite")
        object.__setattr__(self, "A", A)
        scale = tuple(int(s) for s in self.scale) or (1,) * k
        if len(scale) != k or min(scale) < 1:
            raise LatticeError("one positive scale per coordinate")
        object.__setattr__(self, "scale", scale)
        eq = tuple(sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in self.equal))
        object.__setattr__(self, "equal", eq)
        object.__setattr__(self, "pinned", tuple(sorted(set(int(p) for p in self.pinned))))
        for i in [c for pair in eq for c in pair] + list(self.pinned):
            if not 0 <= i < k:
                raise LatticeError("constraint coordinate out of range")
        if (2 * self.K + 1) ** k > BUDGET:
            raise BudgetError("lattice enumeration budget exceeded")

    @property
    def k(self) -> int:
        return self.A.shape[0]

    def with_form(self, A) -> "LatticeModel":
        return LatticeModel(A, self.scale, self.equal, self.pinned, self.K)

    def restrict(self, scale=None, equal=(), pinned=()) -> "LatticeModel":
        """The sublattice obtained by adding constraints."""
        sc = self.scale if scale is None else tuple(math.lcm(a, int(b)) for a, b in zip(self.scale, scale))
        return LatticeModel(self.A, sc, self.equal + tuple(equal), self.pinned + tuple(pinned), self.K)

    def intersect(self, other: "LatticeModel") -> "LatticeModel":
        sc = tuple(math.lcm(a, b) for a, b in zip(self.scale, other.scale))
        return LatticeModel(self.A, sc, self.equal + other.equal, self.pinned + other.pinned, self.K)

    def _classes(self) -> list[int]:
        parent = list(range(self.k))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        for a, b in self.equal:
            parent[find(a)] = find(b)
        return [find(i) for i in range(self.k)]

    def contains(self, sub: "LatticeModel") -> bool:
        """Structural test that ``sub`` is a sublattice of this lattice."""
        if sub.k != self.k:
            return False
        cls = sub._classes()
        pinned_cls = {cls[p] for p in sub.pinned}
        for i in range(self.k):
            if cls[i] in pinned_cls:
                continue
            # coordinate i of sub lies in the lcm of scales over its class
            eff = math.lcm(*[sub.scale[j] for j in range(self.k) if cls[j] == cls[i]])
            if eff % self.scale[i]:
                return False
        for a, b in self.equal:
            if cls[a] != cls[b] and not (cls[a] in pinned_cls and cls[b] in pinned_cls):
                return False
        return all(cls[p] in pinned_cls for p in self.pinned)

    def points(self) -> np.ndarray:
        if "pts" not in self._cache:
            axes = []
            for i in range(self.k):
                if i in self.pinned:
                    axes.append(np.array([0]))
                else:
                    r = np.arange(-self.K, self.K + 1)
                    axes.append(r[r % self.scale[i] == 0])
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.k)
            ok = np.ones(len(grid), dtype=bool)
            for a, b in self.equal:
                ok &= grid[:, a] == grid[:, b]
            pts = grid[ok]
            self._cache["pts"] = pts
            self._cache["energy"] = 0.5 * np.einsum("ni,ij,nj->n", pts, self.A, pts)
            self._cache["shell"] = np.abs(pts).max(axis=1) == self.K if len(pts) else np.zeros(0, bool)
        return self._cache["pts"]

    def _weights(self, v=None) -> tuple[np.ndarray, np.ndarray]:
        pts = self.points()
        logw = -self._cache["energy"]
        if v is not None:
            logw = logw + pts @ np.asarray(v, dtype=float)
        return pts, logw

    def partition(self, v=None) -> tuple[float, float]:
        """Truncated sum of exp(-<psi,A psi>/2 + <v,psi>) and its shell fraction."""
        _, logw = self._weights(v)
        w = np.exp(logw)
        z = float(w.sum())
        tail = float(w[self._cache["shell"]].sum() / z)
        return z, tail

    def moments(self, u) -> tuple[float, np.ndarray, np.ndarray, float]:
        """M[u], grad M[u], Hessian M[u] (all normalized by Z) and tail."""
        pts, logw0 = self._weights()
        z0 = np.exp(logw0).sum()
        w = np.exp(logw0 + pts @ np.asarray(u, dtype=float))
        m = w.sum() / z0
        grad = (w @ pts) / z0
        hess = np.einsum("n,ni,nj->ij", w, pts, pts) / z0
        tail = float(w[self._cache["shell"]].sum() / w.sum())
        return float(m), grad, hess, tail


def lattice_mgf(m: LatticeModel, v) -> tuple[float, float]:
    """M[v] = E[exp(<v, psi>)] and the larger shell fraction of the two sums."""
    z, t0 = m.partition()
    zv, t1 = m.partition(v)
    return zv / z, max(t0, t1)


def rsd_suite(m: LatticeModel, sub: LatticeModel | None = None, B=None, u=None, v=None, sub2: LatticeModel | None = None, M=None, tol: float = 1e-9) -> list[CheckReport]:
    """Evaluate the lattice-Gaussian monotonicity inequalities on one instance.

    Reports, when the relevant inputs are present:
    Pythagoras  M[u] M[v] <= sqrt(M[u+v] M[u-v]);
    sublattice  M_sub[v] <= M[v];
    matrix      M_A[v] <= M_B[v] for A >= B > 0;
    Hessian     H M[u] / M[u] - grad grad^T / M[u]^2 - H M[0] >= 0;
    correlation E[exp(<u,psi>) <psi, M psi>] >= M[u] E[<psi, M psi>];
    submodular  Z_sub Z_sub2 <= Z Z_(sub and sub2).
    """
    k = m.k
    u = np.zeros(k) if u is None else np.asarray(u, dtype=float)
    v = np.zeros(k) if v is None else np.asarray(v, dtype=float)
    out = []
    inp = {"A": m.A, "scale": m.scale, "equal": m.equal, "pinned": m.pinned, "u": u, "v": v}
    mu, tu = lattice_mgf(m, u)
    mv, tv = lattice_mgf(m, v)
    mp, tp = lattice_mgf(m, u + v)
    mm, tm = lattice_mgf(m, u - v)
    out.append(make_report("pythagoras", mu * mv, math.sqrt(mp * mm), tol, max(tu, tv, tp, tm), inp))
    if sub is not None:
        if not m.contains(sub) or not np.array_equal(sub.A, m.A):
            raise LatticeError("sub is not a sublattice with the same form")
        ms, ts = lattice_mgf(sub, v)
        out.append(make_report("sublattice_monotonicity", ms, mv, tol, max(ts, tv), inp))
    if B is not None:
        B = np.asarray(B, dtype=float)
        if np.linalg.eigvalsh(m.A - B).min() < EIG_FLOOR or np.linalg.eigvalsh(B).min() <= 0:
            raise LatticeError("matrix monotonicity needs A >= B > 0")
        mb, tb = lattice_mgf(m.with_form(B), v)
        out.append(make_report("matrix_monotonicity", mv, mb, tol, max(tv, tb), {**inp, "B": B}))
    Mu, g, H, th = m.moments(u)
    _, _, H0, _ = m.moments(np.zeros(k))
    gap = H / Mu - np.outer(g, g) / Mu**2 - H0
    low = float(np.linalg.eigvalsh(0.5 * (gap + gap.T)).min())
    out.append(make_report("hessian", 0.0, low, tol, th, inp))
    Mmat = np.eye(k) if M is None else np.asarray(M, dtype=float)
    if np.linalg.eigvalsh(Mmat).min() < EIG_FLOOR:
        raise LatticeError("M must be positive semidefinite")
    lhs_c = float(np.sum(H * Mmat))
    rhs_c = Mu * float(np.sum(H0 * Mmat))
    out.append(make_report("mgf_correlation", rhs_c, lhs_c, tol, th, inp))
    if sub2 is not None:
        if sub is None or not m.contains(sub2):
            raise LatticeError("submodularity needs two sublattices")
        z, t0 = m.partition()
        z1, t1 = sub.partition()
        z2, t2 = sub2.partition()
        z12, t3 = sub.intersect(sub2).partition()
        # normalize by Z^2 so the numbers are O(1)
        out.append(make_report("submodularity", z1 * z2 / z**2, z12 / z, tol, max(t0, t1, t2, t3), inp))
    return out


def laplacian_form(sg, lam: float) -> np.ndarray:
    """Quadratic form lam * (-Delta) of the integer Gaussian field on free sites."""
    return lam * sg.laplacian()


def annealed_rsd_check(dg, U, groups, v: dict, K: int = 8, tol: float = 1e-9) -> CheckReport:
    """M^L[v] >= M^M[v] where M forces each group of sites to share a value.

    ``groups`` is either a list of site tuples or a merge record from
    :func:`heightspin.graph.degree_reduce`, in which case ``dg`` is ignored
    and the model lives on the subdivided graph.
    """
    from .exact import Constraints, height_mgf
    from .graph import MergeRecord

    if isinstance(groups, MergeRecord):
        g = groups.subdivided
        sg = g.sites()
        index = {int(lbl): i for i, lbl in enumerate(sg.labels)}
        site_groups = []
        for grp in groups.groups:
            site_groups.append(tuple(index[v] if v in index else sg.ground for v in grp))
        dg = sg
    else:
        site_groups = [tuple(int(s) for s in grp) for grp in groups]
    big = height_mgf(dg, U, v, K=K)
    small = height_mgf(dg, U, v, Constraints(equal=tuple(site_groups)), K=K)
    return make_report("annealed_sublattice", small.value, big.value, tol, max(big.tail, small.tail), {"v": v, "groups": site_groups})


def equal_heights_correlation_check(dg, U, pair1, pair2, K: int = 8, tol: float = 1e-9) -> CheckReport:
    """P[n_a = n_b and n_c = n_d] >= P[n_a = n_b] P[n_c = n_d].

    Each probability is a ratio of partition functions with an equality
    constraint; the ground index stands for the boundary value.
    """
    from .exact import Constraints, zuf_partition

    p1, p2 = tuple(int(s) for s in pair1), tuple(int(s) for s in pair2)
    z = zuf_partition(dg, U, K=K)
    z1 = zuf_partition(dg, U, Constraints(equal=(p1,)), K=K)
    z2 = zuf_partition(dg, U, Constraints(equal=(p2,)), K=K)
    z12 = zuf_partition(dg, U, Constraints(equal=(p1, p2)), K=K)
    tail = max(r.tail for r in (z, z1, z2, z12))
    return make_report("equal_heights_correlation", (z1.value / z.value) * (z2.value / z.value), z12.value / z.value, tol, tail, {"pairs": [p1, p2]})


def random_rsd_instance(rng: np.random.Generator, k: int = 3, K: int = 16) -> dict:
    """A seeded instance for :func:`rsd_suite`: a well-conditioned form,
    two random sublattices, a dominated form and tilts small enough that
    the truncation shell carries negligible mass."""
    R = rng.normal(size=(k, k))
    A = R @ R.T / k + 0.6 * np.eye(k)
    w = rng.normal(size=k)
    s = rng.uniform(0.1, 0.5) * np.linalg.eigvalsh(A).min() / float(w @ w)
    B = A - s * np.outer(w, w)
    u = rng.uniform(-0.3, 0.3, size=k)
    v = rng.uniform(-0.3, 0.3, size=k)
    M = rng.normal(size=(k, k))
    M = M @ M.T
    base = LatticeModel(A, K=K)
    return {
        "m": base,
        "sub": _random_sublattice(rng, base),
        "sub2": _random_sublattice(rng, base),
        "B": B,
        "u": u,
        "v": v,
        "M": M,
    }


def _random_sublattice(rng: np.random.Generator, m: LatticeModel) -> LatticeModel:
    k = m.k
    kind = rng.integers(3)
    if kind == 0:
        return m.restrict(scale=rng.integers(1, 3, size=k))
    if kind == 1:
        a, b = rng.choice(k, size=2, replace=False)
        return m.restrict(equal=[(a, b)])
    return m.restrict(pinned=[int(rng.integers(k))])
