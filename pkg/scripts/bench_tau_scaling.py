#!/usr/bin/env python3
"""Coarse performance check: the per-instance pipeline at fixed (p, d, K)
should scale near-linearly in the number of pre-selected trees.

Prints wall-clock per tau and the observed scaling exponent; this is a
benchmark, not a unit test.
"""
import time

import numpy as np

from bellatrex.explain import explain_fixed
from bellatrex.forest import ForestParams, fit_forest
from bellatrex.synthdata import make_binary


def main() -> None:
    ds = make_binary(600, 12, seed=0)
    instances = ds.covariates[:40]
    taus = [40, 80, 160, 320]
    timings = []
    for tau in taus:
        forest = fit_forest(ds, ForestParams(n_trees=tau, seed=1))
        t0 = time.time()
        for i, x in enumerate(instances):
            explain_fixed(forest, x, tau=tau, dim=2, n_clusters=2, seed=i)
        per_instance = (time.time() - t0) / len(instances)
        timings.append(per_instance)
        print(f"tau={tau:4d}  {per_instance * 1000:7.2f} ms/instance")
    exponent = np.polyfit(np.log(taus), np.log(timings), 1)[0]
    print(f"observed scaling exponent: {exponent:.2f} (1.0 = linear)")


if __name__ == "__main__":
    main()
