"""The three detectability experiments, dataset ingestion, and result I/O.

Each experiment walks a grid of data dimensions, builds calibrated changes
(target sKL 1 by default), monitors the log-likelihood with the Welch and
Lepage tests, and aggregates rejection rates or log-likelihood variances.
Repetitions are independent tasks over a deterministic seed tree
``(base_seed, stage, dim_index, repetition, retry)``, so results are
bit-identical for a given config regardless of the worker count.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .changegen import generate_change
from .divergence import transform_model
from .models import (
    as_data_matrix,
    evaluate_log_likelihood,
    fit_gaussian,
    fit_gmm_em,
    random_gaussian,
    random_mixture,
    select_k_cv,
)
from .stats_tests import lepage_test, welch_t_one_sided

__all__ = [
    "ExperimentConfig",
    "PowerPoint",
    "PowerCurve",
    "VariancePoint",
    "VarianceCurve",
    "gaussian_power_experiment",
    "gmm_variance_experiment",
    "realdata_power_experiment",
    "load_dataset",
    "synthetic_mixture_dataset",
    "write_manifest",
    "config_from_dict",
]

TESTS = ("t-test", "lepage")

_GAUSSIAN_DIMS = (1, 2, 4, 8, 16, 32, 64, 128)
_GAUSSIAN_POLICIES = ("known", "per-dim:100", "fixed:100")


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared experiment knobs; unset fields fall back to per-experiment
    desk-scale defaults (1000 / 200 / 500 repetitions for the Gaussian,
    mixture-variance and real-data experiments)."""

    dims: tuple = None
    runs: int = None
    window: int = 500
    alpha: float = 0.05
    target_skl: float = 1.0
    training_policies: tuple = None  # "known" | "per-dim:<c>" | "fixed:<n>"
    likelihood_variants: tuple = ("upper", "lower")
    mc_samples: int = 100_000
    base_seed: int = 0
    workers: int = None

    def __post_init__(self):
        if self.runs is not None and self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.target_skl <= 0:
            raise ValueError(f"target_skl must be positive, got {self.target_skl}")
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
            if any(d < 1 for d in self.dims):
                raise ValueError(f"dims must be positive, got {self.dims}")
        if self.training_policies is not None:
            object.__setattr__(
                self, "training_policies", tuple(self.training_policies)
            )
            for p in self.training_policies:
                _training_size(p, 1)  # syntax check
        object.__setattr__(
            self, "likelihood_variants", tuple(self.likelihood_variants)
        )


def config_from_dict(obj: dict) -> ExperimentConfig:
    obj = dict(obj)
    for key in ("dims", "training_policies", "likelihood_variants"):
        if obj.get(key) is not None:
            obj[key] = tuple(obj[key])
    return ExperimentConfig(**obj)


def _training_size(policy: str, d: int):
    """Training-set size implied by a policy string (None for 'known')."""
    if policy == "known":
        return None
    kind, _, value = policy.partition(":")
    if kind == "per-dim" and value:
        return int(value) * d
    if kind == "fixed" and value:
        return int(value)
    raise ValueError(
        f"unknown training policy {policy!r} "
        "(expected 'known', 'per-dim:<c>' or 'fixed:<n>')"
    )


def _rng_for(base_seed: int, stage: int, dim_index: int, rep: int, retry: int):
    seq = np.random.SeedSequence((int(base_seed), stage, dim_index, rep, retry))
    return np.random.Generator(np.random.PCG64(seq))


def _map_tasks(func, arg_tuples, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1:
        return [func(*args) for args in arg_tuples]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=workers)(delayed(func)(*args) for args in arg_tuples)


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class PowerPoint:
    d: int
    test: str
    variant: str
    power: float
    std_error: float
    runs: int


@dataclass(frozen=True)
class VariancePoint:
    d: int
    variant: str
    mean_sample_variance: float
    std_error: float
    runs: int


def _csv_rows(points):
    rows = [["d", "test", "variant", "power_or_variance", "std_error", "runs"]]
    for p in points:
        if isinstance(p, PowerPoint):
            value, test = p.power, p.test
        else:
            value, test = p.mean_sample_variance, ""
        rows.append([p.d, test, p.variant, repr(value), repr(p.std_error), p.runs])
    return rows


@dataclass
class PowerCurve:
    entries: tuple
    failures: dict = field(default_factory=dict)  # (d, label) -> count
    calibration_gaps: dict = field(default_factory=dict)  # d -> max |sKL - target|

    def power(self, d: int, test: str, variant: str) -> float:
        for p in self.entries:
            if (p.d, p.test, p.variant) == (d, test, variant):
                return p.power
        raise KeyError((d, test, variant))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(_csv_rows(self.entries))


@dataclass
class VarianceCurve:
    entries: tuple
    failures: dict = field(default_factory=dict)

    def variance(self, d: int, variant: str) -> float:
        for p in self.entries:
            if (p.d, p.variant) == (d, variant):
                return p.mean_sample_variance
        raise KeyError((d, variant))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(_csv_rows(self.entries))


def _binomial_point(d, test, variant, flags) -> PowerPoint:
    n = len(flags)
    p = float(np.mean(flags)) if n else float("nan")
    se = float(np.sqrt(p * (1.0 - p) / n)) if n else float("nan")
    return PowerPoint(d, test, variant, p, se, n)


# ---------------------------------------------------------------------------
# Gaussian power experiment


def _gaussian_power_run(base_seed, dim_index, d, rep, window, alpha, target, policies):
    for retry in (0, 1):
        rng = _rng_for(base_seed, 1, dim_index, rep, retry)
        try:
            model = random_gaussian(d, rng)
            spec = generate_change(model, target, rng)
            phi1 = transform_model(model, spec.Q, spec.v)
            stream = np.vstack([model.sample(window, rng), phi1.sample(window, rng)])
            gap = abs(spec.achieved_skl.value - target)

            rejections = {}
            skipped = []
            for policy in policies:
                size = _training_size(policy, d)
                if size is None:
                    ref = model
                elif size <= d:  # sample covariance cannot be full rank
                    skipped.append(policy)
                    continue
                else:
                    ref = fit_gaussian(model.sample(size, rng))
                ell = ref.log_likelihood(stream)
                past, recent = ell[:window], ell[window:]
                rejections[("t-test", policy)] = welch_t_one_sided(
                    past, recent, alpha
                ).rejected
                rejections[("lepage", policy)] = lepage_test(
                    past, recent, alpha
                ).rejected
            return {"rejections": rejections, "skipped": skipped, "gap": gap}
        except (ValueError, RuntimeError):
            continue
    return {"failed": True}


def gaussian_power_experiment(config: ExperimentConfig) -> PowerCurve:
    """Power of both tests on Gaussian streams with a calibrated change at
    half-stream, for the known model and each estimated-model policy."""
    dims = config.dims or _GAUSSIAN_DIMS
    runs = config.runs or 1000
    policies = config.training_policies or _GAUSSIAN_POLICIES

    tasks = [
        (config.base_seed, di, d, rep, config.window, config.alpha,
         config.target_skl, policies)
        for di, d in enumerate(dims)
        for rep in range(runs)
    ]
    results = _map_tasks(_gaussian_power_run, tasks, config.workers)

    flags = {}
    failures = {}
    gaps = {}
    for (_, di, d, rep, *_), res in zip(tasks, results):
        if res.get("failed"):
            failures[(d, "run")] = failures.get((d, "run"), 0) + 1
            continue
        gaps[d] = max(gaps.get(d, 0.0), res["gap"])
        for policy in res["skipped"]:
            failures[(d, policy)] = failures.get((d, policy), 0) + 1
        for (test, policy), rejected in res["rejections"].items():
            flags.setdefault((d, test, policy), []).append(rejected)

    entries = [
        _binomial_point(d, test, policy, flags[(d, test, policy)])
        for d in dims
        for test in TESTS
        for policy in policies
        if (d, test, policy) in flags
    ]
    return PowerCurve(tuple(entries), failures, gaps)


# ---------------------------------------------------------------------------
# Gaussian-mixture variance experiment


def _gmm_variance_run(base_seed, dim_index, d, rep, window, k, train_size):
    for retry in (0, 1):
        rng = _rng_for(base_seed, 1, dim_index, rep, retry)
        mix = random_mixture(d, k, rng)
        X = mix.sample(window, rng)
        out = {
            "l_u": float(np.var(mix.log_likelihood_upper(X), ddof=1)),
            "l_l": float(np.var(mix.log_likelihood_lower(X), ddof=1)),
        }
        if train_size is None:
            return out
        try:
            fitted = fit_gmm_em(mix.sample(train_size, rng), k, rng)
        except (ValueError, RuntimeError):
            continue
        out["l_hat_u"] = float(np.var(fitted.log_likelihood_upper(X), ddof=1))
        out["l_hat_l"] = float(np.var(fitted.log_likelihood_lower(X), ddof=1))
        return out
    out["failed"] = True
    return out


def gmm_variance_experiment(config: ExperimentConfig, k: int = 2) -> VarianceCurve:
    """Average per-stream sample variance of the mixture log-likelihood
    approximations (dominant-component and Jensen), for the generating model
    and for one fitted by EM on fresh training data."""
    dims = config.dims or _GAUSSIAN_DIMS
    streams = config.runs or 200
    policies = config.training_policies or ("per-dim:200",)
    if len(policies) != 1:
        raise ValueError("the variance experiment takes a single training policy")

    tasks = [
        (config.base_seed, di, d, rep, config.window, k,
         _training_size(policies[0], d))
        for di, d in enumerate(dims)
        for rep in range(streams)
    ]
    results = _map_tasks(_gmm_variance_run, tasks, config.workers)

    values = {}
    failures = {}
    for (_, di, d, rep, *_), res in zip(tasks, results):
        if res.pop("failed", False):
            failures[(d, "fit")] = failures.get((d, "fit"), 0) + 1
        for variant, value in res.items():
            values.setdefault((d, variant), []).append(value)

    entries = []
    for d in dims:
        for variant in ("l_u", "l_l", "l_hat_u", "l_hat_l"):
            vals = values.get((d, variant))
            if not vals:
                continue
            arr = np.asarray(vals)
            se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            entries.append(
                VariancePoint(d, variant, float(arr.mean()), se, arr.size)
            )
    return VarianceCurve(tuple(entries), failures)


# ---------------------------------------------------------------------------
# real-data power experiment


def _realdata_run(base_seed, dim_index, d, rep, data, k, window, alpha, target,
                  train_factor, variants, mc_samples):
    n = data.shape[0]
    for retry in (0, 1):
        rng = _rng_for(base_seed, 1, dim_index, rep, retry)
        try:
            cols = np.sort(rng.choice(data.shape[1], size=d, replace=False))
            sub = data[:, cols]
            train_size = train_factor * d
            idx = rng.choice(n, size=train_size + 2 * window, replace=False)
            train = sub[idx[:train_size]]
            stream = sub[idx[train_size:]].copy()

            reference = fit_gmm_em(sub, k, rng)
            spec = generate_change(reference, target, rng, mc_samples=mc_samples)
            stream[window:] = spec.apply(stream[window:])
            fitted = fit_gmm_em(train, k, rng)

            rejections = {}
            for variant in variants:
                ell = evaluate_log_likelihood(fitted, stream, variant)
                past, recent = ell[:window], ell[window:]
                rejections[("t-test", variant)] = welch_t_one_sided(
                    past, recent, alpha
                ).rejected
                rejections[("lepage", variant)] = lepage_test(
                    past, recent, alpha
                ).rejected
            gap = abs(spec.achieved_skl.value - target)
            return {"rejections": rejections, "gap": gap}
        except (ValueError, RuntimeError):
            continue
    return {"failed": True}


def realdata_power_experiment(
    data,
    config: ExperimentConfig,
    k: int = None,
    k_candidates=(1, 2, 3, 4, 5, 6),
) -> PowerCurve:
    """Power decay over randomly chosen column subsets of a real dataset.

    Per repetition: pick ``d`` columns, subsample (without replacement) a
    training set of ``200 d`` rows plus a two-window stream, fit a reference
    mixture on the full d-column data, perturb the stream's second half by a
    calibrated change, fit the monitoring mixture on the training rows, and
    run both tests on the upper/lower log-likelihood approximations.

    ``k`` defaults to 5-fold cross-validation on the full-dimensional data.
    """
    data = as_data_matrix(data)
    n, full_d = data.shape
    dims = config.dims or tuple(range(1, full_d + 1))
    runs = config.runs or 500
    policies = config.training_policies or ("per-dim:200",)
    if len(policies) != 1 or not policies[0].startswith("per-dim:"):
        raise ValueError("the real-data experiment takes one 'per-dim:<c>' policy")
    train_factor = int(policies[0].split(":")[1])

    if max(dims) > full_d:
        raise ValueError(f"requested d={max(dims)} exceeds dataset dimension {full_d}")
    worst = train_factor * max(dims) + 2 * config.window
    if worst > n:
        raise ValueError(
            f"dataset has {n} rows; d={max(dims)} needs {worst} for sampling "
            "without replacement"
        )

    if k is None:
        k = select_k_cv(data, k_candidates, folds=5,
                        rng=_rng_for(config.base_seed, 0, 0, 0, 0))

    tasks = [
        (config.base_seed, di, d, rep, data, k, config.window, config.alpha,
         config.target_skl, train_factor, config.likelihood_variants,
         config.mc_samples)
        for di, d in enumerate(dims)
        for rep in range(runs)
    ]
    results = _map_tasks(_realdata_run, tasks, config.workers)

    flags = {}
    failures = {}
    gaps = {}
    for (_, di, d, rep, *_), res in zip(tasks, results):
        if res.get("failed"):
            failures[(d, "run")] = failures.get((d, "run"), 0) + 1
            continue
        gaps[d] = max(gaps.get(d, 0.0), res["gap"])
        for (test, variant), rejected in res["rejections"].items():
            flags.setdefault((d, test, variant), []).append(rejected)

    entries = [
        _binomial_point(d, test, variant, flags[(d, test, variant)])
        for d in dims
        for test in TESTS
        for variant in config.likelihood_variants
        if (d, test, variant) in flags
    ]
    return PowerCurve(tuple(entries), failures, gaps)


# ---------------------------------------------------------------------------
# datasets


def load_dataset(path, fmt: str) -> np.ndarray:
    """Read a dataset into a data matrix.

    ``wine``: semicolon-separated with a header; keeps the 11
    laboratory-analysis columns of rows whose quality grade is >= 6.
    ``miniboone``: whitespace-separated; the first line holds the signal and
    background counts, only the background (muon) block is kept and rows
    containing the -999 sentinel are dropped.  ``generic_csv``: headerless
    comma-separated reals.
    """
    if fmt == "generic_csv":
        values = _loadtxt(path, delimiter=",")
        return as_data_matrix(values)
    if fmt == "wine":
        with open(path, "r", encoding="utf-8") as fh:
            header = [c.strip().strip('"') for c in fh.readline().strip().split(";")]
        if "quality" not in header:
            raise ValueError(f"{path}: no 'quality' column in wine header {header}")
        values = _loadtxt(path, delimiter=";", skiprows=1)
        quality = header.index("quality")
        keep = [i for i in range(len(header)) if i != quality]
        selected = values[values[:, quality] >= 6][:, keep]
        return as_data_matrix(selected)
    if fmt == "miniboone":
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline().split()
            if len(first) != 2:
                raise ValueError(
                    f"{path}: line 1: expected two counts (signal, background), "
                    f"got {first!r}"
                )
            n_signal, n_background = int(first[0]), int(first[1])
        values = _loadtxt(path, skiprows=1)
        if values.shape[0] != n_signal + n_background:
            raise ValueError(
                f"{path}: {values.shape[0]} data rows but header declares "
                f"{n_signal}+{n_background}"
            )
        background = values[n_signal:]
        background = background[~np.any(background == -999.0, axis=1)]
        return as_data_matrix(background)
    raise ValueError(f"unknown dataset format {fmt!r}")


def _loadtxt(path, **kwargs) -> np.ndarray:
    try:
        values = np.loadtxt(path, ndmin=2, **kwargs)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row: {exc}") from exc
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.all(np.isfinite(values), axis=1))[0, 0])
        raise ValueError(
            f"{path}: non-finite value at data row {bad + 1}"
        )
    return values


def synthetic_mixture_dataset(
    n: int = 3258, d: int = 11, k: int = 4, seed: int = 0,
    separation: float = 3.0,
) -> np.ndarray:
    """Stand-in dataset drawn from a random k-component mixture; used when
    the real dataset files are not available.

    Component means are scaled by ``separation`` so the cluster structure is
    visible in every single coordinate, the way it is in real clustered
    data; with unscaled means the low-dimensional marginals of a random
    mixture are nearly unimodal and mixture fits on them are unstable.
    """
    from .models import GaussianMixtureModel, GaussianModel, random_covariance

    rng = _rng_for(seed, 0, 0, 0, 1)
    components = [
        GaussianModel(separation * rng.standard_normal(d),
                      random_covariance(d, rng))
        for _ in range(k)
    ]
    mix = GaussianMixtureModel(np.full(k, 1.0 / k), components)
    return mix.sample(n, rng)


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path, experiment: str, config: ExperimentConfig,
                   extra: dict = None) -> None:
    """Write a replayable JSON record of an experiment invocation."""
    manifest = {
        "experiment": experiment,
        "version": __version__,
        "config": asdict(config),
        **(extra or {}),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {str(k): v for k, v in obj.items()}
    raise TypeError(f"cannot serialize {type(obj).__name__}")
