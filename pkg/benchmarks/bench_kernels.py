"""Benchmark the compiled simulation kernels against the pure-python
fallback.

Runs the birth-level workloads (sterilized colony pairs, first-passage
walks, full partitions with step-function accumulation, total progeny)
on both backends with identical model specs and reports wall time,
births per second, and the compiled-over-python speedup.

Usage:
    python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3]
"""

import argparse
import time

import numpy as np

from colonist.kernels import get_backend, pack_step_functions
from colonist.offspring import MigrationRule, OffspringLaw, model_spec
from colonist.seeding import derive_seed_words

GEO_THIN = model_spec(OffspringLaw.geometric(), MigrationRule.thinning(0.1))
GEO_PLAIN = model_spec(OffspringLaw.geometric(), MigrationRule.thinning(0.0))
SUB_CUT = model_spec(OffspringLaw.custom([0.5, 0.2, 0.2, 0.1]),
                     MigrationRule.cutoff(1))
BUDGET = 10**12
F_PACK = pack_step_functions([([0.25, 2.0], [4.0]), ([0.5, 3.0], [2.0]),
                              ([1.0, 4.0], [6.0])])


def _births(out, workload):
    """Approximate number of birth events a workload performed."""
    if workload == "sterilized":
        return int(np.sum(out[0]))
    if workload == "passage":
        return int(np.sum(out[0]))
    if workload == "partition":
        return int(np.sum(out[2]))     # ZETA column
    return int(np.sum(out[0]))         # total progeny


def workloads(scale):
    n = lambda base: max(1, int(base * scale))
    return [
        ("sterilized", "geometric+thinning(0.1), sterilized pairs",
         lambda be, w: be.sterilized_pairs(GEO_THIN, n(200_000), w, BUDGET)),
        ("passage", "geometric+thinning(0.1), passage to level 5",
         lambda be, w: be.passage_level_pairs(GEO_THIN, 5, n(20_000), w,
                                              BUDGET)),
        ("partition", "subcritical+cutoff(1), partitions with 3 windows",
         lambda be, w: be.partition_functionals(SUB_CUT, 5, 1.0, F_PACK,
                                                n(50_000), 0.0, w, BUDGET)),
        ("progeny", "critical geometric, total progeny (cap 10^6)",
         lambda be, w: be.total_progeny(GEO_PLAIN, 10, n(5_000), 10**6, w)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0,
                    help="multiply all workload sizes (default 1.0)")
    ap.add_argument("--repeat", type=int, default=3,
                    help="timing repetitions, best-of (default 3)")
    ap.add_argument("--seed", type=int, default=20240817)
    args = ap.parse_args()

    backends = [get_backend("compiled"), get_backend("python")]
    header = (f"{'workload':<12} {'births':>12} "
              + "".join(f"{be.BACKEND_NAME + ' (s)':>14}" for be in backends)
              + f"{'speedup':>10}")
    print(header)
    print("-" * len(header))
    for name, desc, fn in workloads(args.scale):
        times = []
        births = 0
        for be in backends:
            words = derive_seed_words(args.seed, "bench", name,
                                      be.BACKEND_NAME)
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                out = fn(be, words)
                best = min(best, time.perf_counter() - t0)
            times.append(best)
            births = max(births, _births(out, name))
        print(f"{name:<12} {births:>12,d} "
              + "".join(f"{t:>14.3f}" for t in times)
              + f"{times[1] / times[0]:>9.1f}x")
        print(f"    {desc}; compiled throughput "
              f"{births / times[0] / 1e6:.1f}M births/s")


if __name__ == "__main__":
    main()
