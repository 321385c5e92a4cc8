"""Sum-product contraction of pairwise models on small graphs.

Every exact computation in the package reduces to a sum over a product of
one- and two-variable factors, each variable ranging over a finite alphabet
(an integer window or a quadrature grid).  The sum is evaluated by tensor
contraction along a path chosen by ``opt_einsum`` under a memory cap, which
is exact and far cheaper than listing configurations once the graph has more
than a handful of sites.
"""

from __future__ import annotations

import numpy as np
import opt_einsum

MAX_INTERMEDIATE = 4e7
# iteration space of a single pairwise step (intermediate times summed indices)
MAX_STEP_WORK = 1e11


class BudgetError(RuntimeError):
    """Raised when a contraction would exceed the memory budget."""


class PairwiseNetwork:
    """Factors over variables ``0..n-1``; variable ``i`` has ``sizes[i]`` states."""

    def __init__(self, sizes) -> None:
        self.sizes = [int(s) for s in sizes]
        self.unary: dict[int, np.ndarray] = {}
        self.pair: dict[tuple[int, int], np.ndarray] = {}

    @property
    def n(self) -> int:
        return len(self.sizes)

    def add_unary(self, i: int, w: np.ndarray) -> None:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.sizes[i],):
            raise ValueError("unary factor has the wrong shape")
        self.unary[i] = self.unary[i] * w if i in self.unary else w.copy()

    def add_pair(self, i: int, j: int, w: np.ndarray) -> None:
        w = np.asarray(w, dtype=float)
        if i == j:
            self.add_unary(i, np.diagonal(w).copy())
            return
        if i > j:
            i, j, w = j, i, w.T
        if w.shape != (self.sizes[i], self.sizes[j]):
            raise ValueError("pair factor has the wrong shape")
        key = (i, j)
        self.pair[key] = self.pair[key] * w if key in self.pair else w.copy()

    def contract(self, open_vars=()) -> np.ndarray | float:
        """Sum over all variables not in ``open_vars``; returns their marginal table."""
        open_vars = [int(v) for v in open_vars]
        operands: list = []
        touched = set()
        for (i, j), w in self.pair.items():
            operands += [w, [i, j]]
            touched.update((i, j))
        for i, w in self.unary.items():
            operands += [w, [i]]
            touched.add(i)
        scalar = 1.0
        for i in range(self.n):
            if i not in touched:
                # an isolated variable contributes its alphabet size unless kept open
                if i in open_vars:
                    operands += [np.ones(self.sizes[i]), [i]]
                else:
                    scalar *= self.sizes[i]
        if not operands:
            return scalar
        path, info = opt_einsum.contract_path(*operands, open_vars, optimize="auto-hq" if len(operands) < 40 else "greedy", memory_limit=MAX_INTERMEDIATE)
        if info.largest_intermediate > MAX_INTERMEDIATE:
            raise BudgetError(f"contraction needs an intermediate of {info.largest_intermediate:.3g} entries")
        # under a memory limit opt_einsum may finish with one naive step over many indices
        work = _max_step_work(info)
        if work > MAX_STEP_WORK:
            raise BudgetError(f"contraction step iterates over {work:.3g} entries")
        out = opt_einsum.contract(*operands, open_vars, optimize=path)
        return scalar * out if open_vars else float(scalar * out)

    def cost(self) -> float:
        operands: list = []
        for (i, j), w in self.pair.items():
            operands += [w, [i, j]]
        for i, w in self.unary.items():
            operands += [w, [i]]
        if not operands:
            return 0.0
        _, info = opt_einsum.contract_path(*operands, [], optimize="greedy")
        return float(info.largest_intermediate)


def _max_step_work(info) -> float:
    worst = 1.0
    for step in info.contraction_list:
        w = 1.0
        for ch in set(step[2].split("->")[0]) - {","}:
            w *= info.size_dict[ch]
        worst = max(worst, w)
    return worst
