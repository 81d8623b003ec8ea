#!/usr/bin/env python3
"""Monte Carlo blocking probability of the production three-stage fabric
as a function of offered load.

The (seed 42, load 320, trials 1000) row is the frozen regression value
asserted by the acceptance suite.

Usage: python3 scripts/blocking_sweep.py [trials] [seed]
"""

import sys

from autopatch.fabric import blocking_experiment, simstar_spec, switch_count


def main() -> int:
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42
    spec = simstar_spec()
    print(f"fabric: {spec.total_inputs} inputs, {spec.total_outputs} outputs, "
          f"{switch_count(spec)} switches; {trials} trials, seed {seed}")
    print(f"{'load':>6} {'blocked_fraction':>18} {'mean_routed':>12}")
    for load in (40, 80, 120, 160, 200, 240, 280, 320, 400, 480):
        result = blocking_experiment(spec, load=load, trials=trials, seed=seed)
        print(f"{load:>6} {result.blocked_fraction:>18.4f} {result.mean_routed:>12.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
