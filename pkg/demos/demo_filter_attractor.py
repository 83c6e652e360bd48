"""How the regime belief behaves between and at orders.

Shows the three ingredients of the exact filter: the deterministic drift
toward the quiet-period equilibrium while no orders arrive, the downward
Bayes jump whenever one does, and the equilibrium roots themselves.

Writes a no-order belief trajectory and one with a few forced fills to
out/demo_filter_attractor/.
"""

from pathlib import Path

import numpy as np

from regimemm.filtering import FilterState, attractor, constant_spread_policy, evolve, jump_update
from regimemm.model import table1_spec, with_params

OUT = Path("out/demo_filter_attractor")


def main():
    spec = with_params(table1_spec(), horizon_T=3.0)
    half = FilterState(np.array([0.5, 0.5]))
    policy = constant_spread_policy(0.04, 0.04)

    print("Quiet-period equilibria of the belief (probability of the slow regime):")
    for beta in (1, 2):
        root = attractor(spec, beta=beta)
        print(f"  {beta} quoting side(s): pi* = {root:.6f}")
    print()

    print("With no orders for a long stretch the belief climbs toward the")
    print("two-sided equilibrium; each fill then knocks it down by the Bayes")
    print("factor pi -> pi / m_hat(pi):")
    for pi in (0.5, 0.6, 0.636):
        jumped = jump_update(FilterState(np.array([pi, 1 - pi])), "ask", 0.04, spec)
        print(f"  fill at pi = {pi:.3f} -> {jumped.probs[0]:.3f}")
    print()

    quiet = evolve(half, policy, [], spec, record_every=20)
    busy = evolve(
        half, policy, [(0.4, "ask"), (0.8, "bid"), (2.0, "ask")], spec, record_every=20
    )
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "belief_quiet.csv").write_text(quiet.to_csv())
    (OUT / "belief_with_fills.csv").write_text(busy.to_csv())
    print(f"Belief trajectories written to {OUT}/")
    print(f"Quiet path settles at pi1 = {quiet.final.probs[0]:.4f} "
          f"(equilibrium {attractor(spec, beta=2):.4f}).")


if __name__ == "__main__":
    main()
