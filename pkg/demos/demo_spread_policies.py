"""Solve both information settings and compare the optimal ask spreads.

Walks through: solving the full-information backward ODE system, solving
the partial-information finite-difference scheme, and printing how the
belief-dependent quotes relate to the per-regime quotes -- including the
difference between the two belief-gradient conventions (see README).

Writes the aligned spread series to out/demo_spread_policies/ as CSV.
"""

from pathlib import Path

import numpy as np

from regimemm import hjb_full, hjb_partial
from regimemm.model import table1_spec

OUT = Path("out/demo_spread_policies")


def main():
    spec = table1_spec()
    print("Market: two regimes, exponential flow 2e^{-25 d} vs 10e^{-25 d},")
    print(f"switch rates 5/5, inventory cap {int(spec.inventory_cap_Nstar)}, horizon {spec.horizon_T}.")
    print()

    print("Solving the full-information system (regime observed)...")
    full = hjb_full.solve_constrained(spec)
    print("Solving the partial-information scheme (belief observed), both conventions...")
    part1 = hjb_partial.solve(spec, m_pi=200)  # filter-consistent default
    part2 = hjb_partial.solve(spec, m_pi=200, belief_gradient_scale=2.0)  # doubled variant
    rep = part1.cfl_report
    print(f"  CFL-driven march took {rep.n_steps} steps, dt in [{rep.min_dt:.2e}, {rep.max_dt:.2e}]")
    print()

    print("Ask spreads at t = 0 (plateau), belief pi = 0.6 of the slow regime:")
    print(f"{'n':>3} {'full i=1':>10} {'full i=2':>10} {'partial':>10} {'partial x2':>11}")
    for n in range(-2, 4):
        a1 = hjb_full.policy(full, 0.0, n, 1)[1]
        a2 = hjb_full.policy(full, 0.0, n, 2)[1]
        p1 = hjb_partial.policy(part1, 0.0, n, 0.6)[1]
        p2 = hjb_partial.policy(part2, 0.0, n, 0.6)[1]
        print(f"{n:>3} {a1:>10.5f} {a2:>10.5f} {p1:>10.5f} {p2:>11.5f}")
    print()
    print("Under the filter-consistent convention the belief-gradient premium")
    print("cancels against the belief-jump gain, so the partial quote tracks a")
    print("belief-weighted blend of the regime quotes.  The doubled convention")
    print("keeps one premium factor, marking quotes up by roughly 5-25% over")
    print("the regime quotes at intermediate beliefs.")
    print()

    OUT.mkdir(parents=True, exist_ok=True)
    times = np.linspace(0.0, spec.horizon_T, 101)
    with open(OUT / "ask_spreads.csv", "w") as fh:
        fh.write("t,n,full_i1,full_i2,partial_pi0.6,partial_x2_pi0.6\n")
        for t in times:
            for n in range(-2, 4):
                fh.write(
                    f"{t:.6f},{n},"
                    f"{hjb_full.policy(full, t, n, 1)[1]:.10f},"
                    f"{hjb_full.policy(full, t, n, 2)[1]:.10f},"
                    f"{hjb_partial.policy(part1, t, n, 0.6)[1]:.10f},"
                    f"{hjb_partial.policy(part2, t, n, 0.6)[1]:.10f}\n"
                )
    print(f"Series written to {OUT / 'ask_spreads.csv'}")
    print("Near expiry the spreads converge to 1/b = 0.04 (no terminal cost),")
    print("with the doubled convention overshooting above it first.")


if __name__ == "__main__":
    main()
