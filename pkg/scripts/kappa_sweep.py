#!/usr/bin/env python3
"""Communication scaling in the condition number.

Sweeps kappa over several decades on heterogeneous synthetic logistic data
(rand-k compression, k = ceil(d/n)) and fits the log-log slope of median
uplink bits-to-target against kappa.  The local-training + compression
schedule should land near slope 1/2.

Usage: python scripts/kappa_sweep.py [out_dir]
"""

import math
import os
import statistics
import sys

from locodl import harness


def main(out_dir="results/kappa_sweep"):
    d, n = 50, 25
    k = math.ceil(d / n)
    bits_by_kappa = {}
    lines = ["kappa,median_bits_to_target"]
    for kappa in (1e2, 1e3, 1e4):
        config = harness.ExperimentConfig(
            problem={"source": "dirichlet", "d": d, "alpha": 1.0}, n=n,
            kappa=kappa, algorithm="locodl", compressor="rand_k", k=k,
            seeds=tuple(range(10)), stop_metric="sqdist", stop_ratio=1e-6,
            cadence=100, max_iters=5_000_000, data_seed=7,
            label=f"kappa{kappa:g}")
        traces = harness.run_experiment(config)
        bits = [harness.bits_to_target(tr, config.stop_ratio, "sqdist_mean")
                for tr in traces]
        med = statistics.median(bits)
        bits_by_kappa[kappa] = med
        lines.append(f"{kappa:g},{med}")
        print(f"kappa={kappa:g}: median bits-to-target = {med}")

    slope = harness.fit_communication_exponent(bits_by_kappa)
    lines.append(f"slope,{slope!r}")
    harness.atomic_write(os.path.join(out_dir, "summary.csv"), "\n".join(lines) + "\n")
    print(f"fitted log-log slope = {slope:.4f} (expect ~0.5)")


if __name__ == "__main__":
    main(*sys.argv[1:2])
