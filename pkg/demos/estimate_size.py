"""Watch one population estimate its own size.

Runs the uniform estimator once at a few sizes, prints the final estimate
against log2 n, then follows the largest run through its trace: the clock
spreads first, epochs accumulate, and agents settle on one output.

    python demos/estimate_size.py
"""

import math

from popsize.estimation import ProtocolParams, simulate


def main() -> None:
    params = ProtocolParams.faithful("as")
    print(f"{'n':>6} {'log2 n':>7} {'estimate':>9} {'error':>6} {'time':>8} restarts")
    res = None
    for n in (64, 256, 1024, 4096):
        res = simulate(n, params, seed=1)
        est = float(res.outputs[0]) if res.converged else float("nan")
        print(f"{n:>6} {math.log2(n):>7.2f} {est:>9.3f} {res.error or float('nan'):>6.3f} "
              f"{res.parallel_time:>8.1f} {res.restart_count}")

    trace = res.trace
    print(f"\ntrace of the n={res.n} run, every tenth snapshot")
    print(f"{'time':>8} {'clk':>7} {'epoch':>9} {'sum':>11} converged")
    rows = trace.as_array()
    cols = {c: i for i, c in enumerate(trace.columns)}
    for row in rows[::max(1, len(rows) // 10)]:
        print(f"{row[0]:>8.1f} {int(row[cols['clk_min']]):>3}-{int(row[cols['clk_max']]):<3} "
              f"{int(row[cols['epoch_min']]):>4}-{int(row[cols['epoch_max']]):<4} "
              f"{int(row[cols['sum_min']]):>5}-{int(row[cols['sum_max']]):<5} "
              f"{int(row[cols['converged_agents']])}/{res.n}")
    print("\nobserved maxima:", res.field_ranges)


if __name__ == "__main__":
    main()
