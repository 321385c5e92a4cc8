"""Sample a height field, draw it, and list its level loops around one face."""

import numpy as np

from heightspin.graph import build_square_lattice, dual
from heightspin.loops import extract_level_lines, loop_height_counts, quadrant_event_sum
from heightspin.mc import ChainSpec, iter_configs, sample_zuf
from heightspin.potential import gaussian

L = 4
LAM = 0.4


def draw(dg, h):
    n = h.full()
    for y in np.arange(L - 0.5, -L, -1.0):
        print(" ".join(f"{int(n[dg.site_at(x, y)]):+d}" for x in np.arange(-L + 0.5, L, 1.0)))


def main():
    dg = dual(build_square_lattice(L))
    spec = ChainSpec(sweeps=2_000, burn_in=1_000, seed=3, snapshot_every=1_000)
    h = list(iter_configs(dg, sample_zuf(dg, gaussian(LAM), spec)))[-1]
    draw(dg, h)
    f0 = dg.site_at(0.5, 0.5)
    print(f"\nheight at the marked face: {int(h.full()[f0])}")
    lo, hi = int(h.full().min()), int(h.full().max())
    for q in np.arange(lo + 0.5, hi, 1.0):
        loops = extract_level_lines(h, float(q)).loops
        around = sum(f0 in lp.interior for lp in loops)
        lhs, rhs = quadrant_event_sum(h, f0, float(q))
        print(f"q={q:+.1f}: {len(loops)} loops, {around} around the face, quadrant sum {lhs} <= {rhs}")
    print("loop count vs |height|:", loop_height_counts(h, f0))


if __name__ == "__main__":
    main()
