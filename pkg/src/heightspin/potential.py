"""Even edge potentials U with U(0) = 0 and the tools to classify them.

Edge weights are ``exp(-J * U(q))`` where ``J`` is the edge coupling, so a
Gaussian potential with coupling ``J`` is the Gaussian with ``lam * J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import mpmath
import numpy as np

from .report import CheckReport, make_report

KINDS = ("gaussian", "bessel", "power", "tabulated")


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    kind: str
    lam: float = 1.0
    beta: float = 1.0
    alpha: float = 2.0
    table: tuple[float, ...] = ()
    tail_slope: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if not self.scale > 0:
            raise PotentialError("scale must be positive")
        if self.kind in ("gaussian", "power") and not self.lam > 0:
            raise PotentialError("lam must be positive")
        if self.kind == "power" and not self.alpha > 0:
            raise PotentialError("alpha must be positive")
        if self.kind == "bessel" and not self.beta > 0:
            raise PotentialError("beta must be positive")
        if self.kind == "tabulated":
            if not self.table or self.table[0] != 0.0:
                raise PotentialError("a tabulated potential starts with U(0) = 0")

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        a = np.abs(q)
        if self.kind == "gaussian":
            u = 0.5 * self.lam * a * a
        elif self.kind == "power":
            u = self.lam * a**self.alpha
        elif self.kind == "bessel":
            if np.any(a != np.round(a)):
                raise PotentialError("the Bessel potential is defined on integers only")
            u = -log_bessel_ratio(a.astype(np.int64), self.beta)
        else:
            tab = np.asarray(self.table)
            Q = len(tab) - 1
            inside = np.interp(np.minimum(a, Q), np.arange(Q + 1), tab)
            u = inside + self.tail_slope * np.maximum(a - Q, 0.0)
        return self.scale * u

    def weight(self, q) -> np.ndarray:
        return np.exp(-self(q))

    def scaled(self, J: float) -> "Potential":
        """The potential ``J * U``; Gaussian and power kinds fold ``J`` into ``lam``."""
        J = float(J)
        if self.kind in ("gaussian", "power"):
            return replace(self, lam=self.lam * J * self.scale, scale=1.0)
        return replace(self, scale=self.scale * J)

    @property
    def continuous(self) -> bool:
        """True if U can be evaluated off the integers."""
        return self.kind in ("gaussian", "power", "tabulated")

    def label(self) -> str:
        if self.kind == "gaussian":
            s = f"gaussian:l={self.lam!r}"
        elif self.kind == "bessel":
            s = f"bessel:b={self.beta!r}"
        elif self.kind == "power":
            s = f"power:l={self.lam!r},a={self.alpha!r}"
        else:
            s = f"tabulated:n={len(self.table)},slope={self.tail_slope!r}"
        return s if self.scale == 1.0 else f"{s}*{self.scale!r}"


def gaussian(lam: float) -> Potential:
    return Potential("gaussian", lam=float(lam))


def bessel(beta: float) -> Potential:
    return Potential("bessel", beta=float(beta))


def power(lam: float, alpha: float) -> Potential:
    return Potential("power", lam=float(lam), alpha=float(alpha))


def tabulated(values, tail_slope: float) -> Potential:
    return Potential("tabulated", table=tuple(float(v) for v in values), tail_slope=float(tail_slope))


def parse_potential(text: str) -> Potential:
    """Parse strings such as ``gaussian:l=1.25``, ``bessel:b=2`` or ``power:l=1,a=1.5``."""
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, sep, v = item.partition("=")
        if not sep:
            raise PotentialError(f"bad parameter {item!r} in {text!r}")
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise PotentialError(f"bad number {v!r} in {text!r}") from None
    expected = {"gaussian": {"l"}, "bessel": {"b"}, "power": {"l", "a"}}
    if kind not in expected:
        raise PotentialError(f"unknown potential kind {kind!r}")
    if set(params) != expected[kind]:
        raise PotentialError(f"{kind} takes parameters {sorted(expected[kind])}, got {sorted(params)}")
    if kind == "gaussian":
        return gaussian(params["l"])
    if kind == "bessel":
        return bessel(params["b"])
    return power(params["l"], params["a"])


# -- modified Bessel functions of integer order -----------------------------------


def _log_series(m: int, beta: float) -> float:
    # all terms positive, so summing in log space loses nothing to cancellation
    lx = math.log(beta / 2.0)
    terms = []
    k = 0
    while True:
        t = (2 * k + m) * lx - math.lgamma(k + 1) - math.lgamma(k + m + 1)
        terms.append(t)
        if k > beta and t < terms[0] - 40.0 and t < max(terms) - 40.0:
            break
        k += 1
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


@lru_cache(maxsize=256)
def _miller_table(beta: float, mmax: int) -> np.ndarray:
    """log(I_k(beta) / I_0(beta)) for k = 0..mmax by downward recurrence."""
    start = max(mmax, int(beta)) + 30 + int(math.sqrt(40.0 * max(mmax, beta, 1.0)))
    t = np.zeros(start + 2)
    t[start] = 1e-300
    for k in range(start, 0, -1):
        t[k - 1] = t[k + 1] + (2.0 * k / beta) * t[k]
        if t[k - 1] > 1e250:
            # rescaling every entry keeps the ratios exact
            t[k - 1 :] *= 1e-250
    with np.errstate(divide="ignore"):
        logs = np.log(t[: mmax + 1])
    return logs - logs[0]


def log_bessel_ratio(m, beta: float) -> np.ndarray:
    """log(I_m(beta) / I_0(beta)) for integer ``m`` (array-friendly)."""
    if not beta > 0:
        raise PotentialError("beta must be positive")
    m = np.abs(np.asarray(m, dtype=np.int64))
    mmax = int(m.max()) if m.size else 0
    if beta <= 1.0:
        l0 = _log_series(0, beta)
        vals = np.array([_log_series(k, beta) - l0 for k in range(mmax + 1)])
    else:
        vals = _miller_table(float(beta), mmax)
    return vals[m]


def log_bessel_I(m: int, beta: float) -> float:
    """log I_m(beta) for integer m and beta > 0."""
    if not beta > 0:
        raise PotentialError("beta must be positive")
    m = abs(int(m))
    if beta <= 1.0:
        return _log_series(m, beta)
    return _log_series(0, beta) + float(log_bessel_ratio(m, beta))


def bessel_I(m: int, beta: float) -> float:
    """Modified Bessel function I_m(beta) of integer order, with I_{-m} = I_m."""
    return math.exp(log_bessel_I(m, beta))


def bessel_addition_check(n: int, m: int, beta1: float, beta2: float, l_max: int = 64, tol: float = 1e-10) -> CheckReport:
    """Compare I_{n-m}(b1 + b2) with sum_{|l| <= l_max} I_{n-l}(b1) I_{l-m}(b2).

    The truncated sum is compared in relative terms; the dropped tail is
    bounded by the first omitted term on each side.
    """
    ls = range(-l_max, l_max + 1)
    total = math.fsum(bessel_I(n - l, beta1) * bessel_I(l - m, beta2) for l in ls)
    exact = bessel_I(n - m, beta1 + beta2)
    edge = bessel_I(n + l_max + 1, beta1) * bessel_I(l_max + 1 - m, beta2)
    edge += bessel_I(n - l_max - 1, beta1) * bessel_I(-l_max - 1 - m, beta2)
    rel = abs(total - exact) / exact
    inputs = {"n": n, "m": m, "beta1": beta1, "beta2": beta2, "l_max": l_max}
    return make_report("bessel_addition", rel, 0.0, tol, tail=edge / exact, inputs=inputs, sum=total, exact=exact)


def characteristic_positivity(U: Potential, points: int = 1024, M: int = 64) -> CheckReport:
    """min over a uniform phi grid of G_U(phi), truncated at |m| <= M."""
    phi = np.linspace(-np.pi, np.pi, points, endpoint=False)
    g = characteristic(U, phi, M)
    tail = 2.0 * float(np.sum(U.weight(np.arange(M + 1, 4 * M + 1))))
    lo = float(g.min())
    rep = make_report("characteristic_positive", -lo, 0.0, 0.0, tail=tail, inputs={"U": U.label(), "points": points, "M": M})
    rep.passed = lo > tail
    return rep


# -- divisibility ---------------------------------------------------------------


def divisibility_factor(U: Potential, r: int) -> Potential:
    """The potential whose r-fold convolution reproduces exp(-U) up to a constant.

    Gaussians divide under continuous convolution, Bessel weights under
    discrete convolution.  Other kinds have no closed form here.
    """
    if int(r) != r or r < 1:
        raise PotentialError("r must be a positive integer")
    if r == 1:
        return U
    if U.kind == "gaussian":
        return replace(U, lam=U.lam * r)
    if U.kind == "bessel":
        if U.scale != 1.0:
            raise PotentialError("only unscaled Bessel potentials are divisible in closed form")
        return replace(U, beta=U.beta / r)
    raise PotentialError(f"{U.kind} potentials have no closed-form divisibility factor")


# -- Bernstein and convexity tests ---------------------------------------------------


@dataclass(frozen=True)
class BernsteinReport:
    k_max: int
    min_signed: tuple[float, ...]
    scales: tuple[float, ...]
    tol: float
    passed: bool
    offending: tuple = ()


def _laplace_profile(U: Potential):
    lam = U.lam * U.scale
    if U.kind == "gaussian":
        return lambda t: mpmath.exp(-lam * t / 2)
    if U.kind == "power":
        a = mpmath.mpf(U.alpha) / 2
        return lambda t: mpmath.exp(-lam * t**a)
    raise PotentialError("Bernstein check supports gaussian and power potentials only")


def _fd_derivative(F, t, k: int, h):
    # central k-th difference, second-order accurate
    s = mpmath.mpf(0)
    for j in range(k + 1):
        s += (-1) ** j * mpmath.binomial(k, j) * F(t + (mpmath.mpf(k) / 2 - j) * h)
    return s / h**k


def bernstein_check(U: Potential, k_max: int = 6, t_grid=None, tol: float = 1e-7) -> BernsteinReport:
    """Test complete monotonicity of F(t) = exp(-U(sqrt t)) on ``t_grid``.

    Derivatives are taken by central finite differences in extended
    precision, checked against the half step.  For each order k the minimum
    over the grid of (-1)^k F^(k) is reported; the check passes when every
    minimum is at least ``-tol`` times the largest |F^(k)| on the grid.
    """
    if not 1 <= k_max <= 8:
        raise PotentialError("k_max must be between 1 and 8")
    if t_grid is None:
        t_grid = np.geomspace(0.1, 10.0, 41)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 2 or np.any(t_grid <= 0):
        raise PotentialError("t_grid needs at least two positive points")
    F = _laplace_profile(U)
    mins, scales, vals_by_k = [], [], []
    with mpmath.workdps(80):
        for k in range(1, k_max + 1):
            vals = []
            for t in t_grid:
                tt = mpmath.mpf(float(t))
                h = tt * mpmath.mpf("1e-7")
                d1 = _fd_derivative(F, tt, k, h)
                d2 = _fd_derivative(F, tt, k, h / 2)
                if abs(d1 - d2) > mpmath.mpf("1e-9") * (abs(d2) + F(tt) / tt**k):
                    raise PotentialError(f"finite-difference derivative of order {k} is not resolved at t={t}")
                vals.append(float((-1) ** k * d2))
            vals = np.array(vals)
            vals_by_k.append(vals)
            mins.append(float(vals.min()))
            scales.append(float(np.abs(vals).max()))
    bad = []
    for k, (vals, s) in enumerate(zip(vals_by_k, scales), start=1):
        for t, v in zip(t_grid, vals):
            if v < -tol * s:
                bad.append((k, float(t)))
    return BernsteinReport(k_max, tuple(mins), tuple(scales), tol, not bad, tuple(bad))


def convexity_check(U: Potential, window: int = 16, tol: float = 1e-12) -> bool:
    """True if U(q+1) - 2U(q) + U(q-1) >= -tol for |q| < window."""
    if window < 2:
        raise PotentialError("window must be at least 2")
    q = np.arange(-window, window + 1)
    u = U(q)
    return bool(np.all(u[2:] - 2 * u[1:-1] + u[:-2] >= -tol))


# -- characteristic function and wrapped Gaussians -------------------------------------


def truncation(U: Potential, tail: float = 1e-14, m_cap: int = 1 << 20) -> int:
    """Cut-off M for sums over m of exp(-U(m)).

    Stops at the first M with ``M * exp(-U(M)) < tail``, which bounds the
    dropped tail for every kind supported here (all decay at least as fast
    as exp(-c sqrt m) for the parameters in use).
    """
    m = 1
    while m <= m_cap:
        block = np.arange(m, 2 * m)
        w = U.weight(block) * block
        hit = np.flatnonzero(w < tail)
        if hit.size:
            return int(block[hit[0]])
        m *= 2
    raise PotentialError("potential decays too slowly to truncate")


def characteristic(U: Potential, phi, M: int | None = None) -> np.ndarray:
    """G_U(phi) = sum_m exp(-i m phi - U(m)), which is real for even U."""
    if M is None:
        M = truncation(U)
    phi = np.asarray(phi, dtype=float)
    m = np.arange(1, M + 1)
    w = U.weight(m)
    return 1.0 + 2.0 * (np.cos(np.multiply.outer(phi, m)) @ w)


def villain_truncation(beta: float, tail: float = 1e-14) -> int:
    """Number of images M so that the wrapped-Gaussian tail is below ``tail``."""
    if not beta > 0:
        raise PotentialError("beta must be positive")
    M = 0
    # worst case |phi| = pi: the first dropped image sits at distance (2M + 1) pi
    while math.exp(-beta * ((2 * M + 1) * math.pi) ** 2 / 2) >= tail:
        M += 1
    return M + 1


def villain_log_weight(phi, beta: float, M: int | None = None) -> np.ndarray:
    """log sum_{|m| <= M} exp(-beta (phi + 2 pi m)^2 / 2), stable in log space."""
    if M is None:
        M = villain_truncation(beta)
    phi = np.asarray(phi, dtype=float)
    m = np.arange(-M, M + 1)
    x = -0.5 * beta * (phi[..., None] + 2 * np.pi * m) ** 2
    top = x.max(axis=-1, keepdims=True)
    return (top + np.log(np.exp(x - top).sum(axis=-1, keepdims=True)))[..., 0]
