"""Independent brute-force references used by the tests.

Nothing here imports the package's contraction code; sums run over every
configuration in a window.
"""

import itertools
import math

import numpy as np


def brute_height_sum(n, edges, couplings, U, K, boundary=0, clamp=None, equal=(), shifts=None, observe=None):
    """Sum of prod_e exp(-J_e U(n_b - n_a + s_e)) over integer heights in [-K, K].

    Returns (Z, sum of weight * observe(heights)) when ``observe`` is given.
    Site ``n`` is the ground, pinned to ``boundary``.
    """
    clamp = dict(clamp or {})
    free = [s for s in range(n) if s not in clamp]
    z = 0.0
    acc = 0.0
    for vals in itertools.product(range(-K, K + 1), repeat=len(free)):
        h = np.empty(n + 1)
        h[n] = boundary
        for s, v in clamp.items():
            h[s] = v
        h[free] = vals
        if any(len({h[s] for s in grp}) > 1 for grp in equal):
            continue
        logw = 0.0
        for e, ((a, b), J) in enumerate(zip(edges, couplings)):
            s = 0.0 if shifts is None else shifts[e]
            logw -= J * float(U(h[b] - h[a] + s))
        w = math.exp(logw)
        z += w
        if observe is not None:
            acc += w * observe(h)
    return (z, acc) if observe is not None else z


def tree_correlation_xy(beta, J_path):
    """XY spin correlation along a path in a tree: product of I1/I0 per edge."""
    from scipy.special import ive

    return math.prod(ive(1, beta * J) / ive(0, beta * J) for J in J_path)


def tree_correlation_villain(beta, J_path):
    """Villain correlation along a path in a tree: exp(-1/(2 beta J)) per edge."""
    return math.prod(math.exp(-1.0 / (2 * beta * J)) for J in J_path)


def theta_sum(x, lam, shift=0.0, M=60):
    """sum_m exp(-lam (m + shift)^2 / 2 + x (m + shift))."""
    m = np.arange(-M, M + 1) + shift
    return float(np.sum(np.exp(-lam * m * m / 2 + x * m)))
