"""The two add-ons: an exact backup count and leader-driven termination.

The backup protocol merges equal powers of two until ceil(log2 n) can be read
off every agent; combined with the fast estimate it gives an upper bound that
is always at least log2 n. The leader variant stops the population once the
estimate has had time to settle.

    python demos/exact_and_terminating.py
"""

import math

from popsize.estimation import ProtocolParams, simulate
from popsize.variants import combined_upper_bound, exact_k, simulate_backup, simulate_leader


def main() -> None:
    params = ProtocolParams.faithful("as")
    print(f"{'n':>5} {'k_ex':>4} {'expected':>8} {'merge time':>10} {'k_est':>7} combined")
    for n in (100, 1000, 1024):
        b = simulate_backup(n, seed=3)
        est = simulate(n, params, seed=3, record_trace=False)
        k_est = float(est.outputs[0]) if est.converged else 0.0
        print(f"{n:>5} {b.k_ex:>4} {exact_k(n):>8} {b.parallel_time:>10.0f} {k_est:>7.3f} "
              f"{combined_upper_bound(k_est, b.k_ex)} (ceil log2 n = {math.ceil(math.log2(n))})")

    print()
    for seed in range(3):
        r = simulate_leader(500, params, seed=seed)
        print(f"leader run {seed}: first converged at {r.first_converged_parallel_time:.0f}, "
              f"terminated at {r.termination_parallel_time:.0f}, safe={r.converged_at_termination}")


if __name__ == "__main__":
    main()
