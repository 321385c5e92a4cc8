"""Height variance at the centre for growing boxes and a few couplings.

Weak coupling shows the variance climbing with the box; strong coupling
pins it near zero.  Short chains, so expect a minute or two.
"""

from heightspin.mc import ChainSpec, depinning_scan, depinning_trends


def main():
    spec = ChainSpec(sweeps=10_000, burn_in=1_000, seed=1)
    table = depinning_scan([2, 4, 8], [0.2, 0.5, 1.0, 5.0], spec)
    print(f"{'lam':>5} {'L':>3} {'E[n^2]':>10} {'se':>8}")
    for row in table:
        print(f"{row['lam']:5.2f} {row['L']:3d} {row['mean']:10.4f} {row['se']:8.4f}")
    trends = depinning_trends(table)
    for lam in sorted(trends["growing"]):
        word = "grows" if trends["growing"][lam] else "flat" if trends["flat"][lam] else "unclear"
        print(f"lam={lam}: {word}")


if __name__ == "__main__":
    main()
