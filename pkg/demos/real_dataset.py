"""Power decay on an ingested dataset (small scale).

Uses the white-wine quality file when available (semicolon CSV from the UCI
repository, laboratory columns of wines graded 6 or better); otherwise a
synthetic 4-component mixture stands in with the same dimension.  Each
repetition picks d random columns, fits a reference mixture to define a
unit-magnitude change, perturbs a bootstrapped stream, and tests windows of
the fitted model's log-likelihood approximations.
"""

import os

import numpy as np

from llcd.experiments import (
    ExperimentConfig,
    load_dataset,
    realdata_power_experiment,
    synthetic_mixture_dataset,
)
from llcd.models import select_k_cv

wine = next(
    (p for p in ("data/winequality-white.csv", "winequality-white.csv")
     if os.path.exists(p)),
    None,
)
if wine:
    data = load_dataset(wine, "wine")
    print(f"wine dataset: {data.shape[0]} rows, {data.shape[1]} columns")
else:
    data = synthetic_mixture_dataset(n=3258, d=11, k=4, seed=3)
    print("wine file not found; using a synthetic 4-component mixture surrogate")

k = select_k_cv(data, (1, 2, 3, 4, 5, 6), folds=5, rng=np.random.default_rng(0))
print(f"components selected by 5-fold cross-validation: k = {k}\n")

config = ExperimentConfig(
    dims=(1, 4, 8, 11),
    runs=60,
    base_seed=17,
    mc_samples=10_000,
)
curve = realdata_power_experiment(data, config, k=k)

print(f"power over {config.runs} repetitions per dimension\n")
print("   d  " + "  ".join(f"{t}/{v:>5s}".rjust(14)
                           for t in ("t-test", "lepage")
                           for v in ("upper", "lower")))
for d in config.dims:
    row = [
        f"{curve.power(d, test, variant):14.3f}"
        for test in ("t-test", "lepage")
        for variant in ("upper", "lower")
    ]
    print(f"  {d:2d}  " + "  ".join(row))

print("\npower deteriorates as columns are added even though every change has")
print("the same magnitude; the dominant-component variant holds up best.")
