"""The statistics behind the estimate: maxima of geometric variables.

Each agent's clock is the largest of n fair-coin geometric draws, and the
output averages many such maxima. This samples both quantities and sets the
empirical tails beside the analytic bounds.

    python demos/geometric_maxima.py
"""

import math

import numpy as np

from popsize import bounds
from popsize.rng import Rng
from popsize.statlab import EmpiricalTail, sample_max_geometric, sample_sum_of_maxima, verify_bound

N = 1024


def main() -> None:
    rng = Rng(7)
    m = sample_max_geometric(rng, N, 200_000)
    lo, hi = bounds.expected_max_interval(N)
    exact = sum(1 - (1 - 2.0 ** -t) ** N for t in range(200))
    print(f"N={N}: sample mean of max {m.mean():.4f}, exact {exact:.4f}, interval ({lo:.4f}, {hi:.4f})")

    tail = EmpiricalTail.from_samples(m, np.arange(1, 9), center=float(m.mean()))
    report = verify_bound(tail, bounds.half_geom_subexp_tail, bound_name="half_geom_subexp_tail")
    print("\n".join(report.lines()))

    for K in (8, 16, 40):
        s = sample_sum_of_maxima(rng, N, K, 20_000) / K
        dev = np.abs(s - math.log2(N))
        print(f"K={K:>2}: mean {s.mean():.3f}, sd {s.std():.3f}, worst |S/K - log N| {dev.max():.3f}")


if __name__ == "__main__":
    main()
