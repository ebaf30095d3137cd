"""Command-line front end.

Subcommands: ``skl`` (divergence between two model files), ``change-gen``
(write a calibrated ChangeSpec), ``test`` (two-window test on scalar CSVs),
and the three experiments (``gaussian-power``, ``gmm-variance``,
``realdata-power``), which write a results CSV plus a replayable JSON
manifest.

Options come from flags, falling back to ``--config`` (either ``key = value``
lines with ``#`` comments, or a manifest JSON emitted by a previous run),
falling back to built-in defaults.  Unknown config keys are rejected.
Exit codes: 0 success, 1 usage error, 2 data or numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .changegen import generate_change, save_change
from .divergence import skl_monte_carlo
from .experiments import (
    ExperimentConfig,
    gaussian_power_experiment,
    gmm_variance_experiment,
    load_dataset,
    realdata_power_experiment,
    write_manifest,
)
from .models import load_model
from .stats_tests import lepage_test, welch_t_one_sided

__all__ = ["main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _parse_ints(text: str) -> tuple:
    return tuple(int(part) for part in str(text).split(",") if part != "")

def _parse_strs(text: str) -> tuple:
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


# per-option: (cast from config/flag string, default)
_OPTION_TYPES = {
    "dims": (_parse_ints, None),
    "runs": (int, None),
    "window": (int, 500),
    "alpha": (float, 0.05),
    "target_skl": (float, 1.0),
    "seed": (int, 0),
    "workers": (int, None),
    "out": (str, None),
    "training": (_parse_strs, None),
    "variant": (_parse_strs, ("upper", "lower")),
    "mc_samples": (int, 100_000),
    "dataset": (str, None),
    "path": (str, None),
    "k": (int, None),
}

# manifest config field -> CLI option name
_MANIFEST_KEYS = {
    "dims": "dims",
    "runs": "runs",
    "window": "window",
    "alpha": "alpha",
    "target_skl": "target_skl",
    "training_policies": "training",
    "likelihood_variants": "variant",
    "mc_samples": "mc_samples",
    "base_seed": "seed",
    "workers": "workers",
}


def _read_config_file(path: str):
    """Returns (values, is_manifest); manifests may carry fields meant for
    other subcommands, plain config files may not."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        manifest = json.loads(text)
        raw = manifest.get("config", manifest)
        values = {}
        for field, option in _MANIFEST_KEYS.items():
            if raw.get(field) is None:
                continue
            value = raw[field]
            if isinstance(value, (list, tuple)):
                value = ",".join(str(x) for x in value)
            values[option] = str(value)
        return values, True
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values, False


def _resolve_options(args, allowed) -> dict:
    """Merge flag values over config-file values over defaults."""
    config, from_manifest = (
        _read_config_file(args.config)
        if getattr(args, "config", None)
        else ({}, False)
    )
    for key in list(config):
        if key not in allowed:
            if from_manifest:
                del config[key]
            else:
                raise UsageError(f"unknown config key {key!r}")
    opts = {}
    for key in allowed:
        cast, default = _OPTION_TYPES[key]
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            opts[key] = flag_value
        elif key in config:
            try:
                opts[key] = cast(config[key])
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            opts[key] = default
    return opts


def _experiment_config(opts, training=None, variants=None) -> ExperimentConfig:
    return ExperimentConfig(
        dims=opts.get("dims"),
        runs=opts.get("runs"),
        window=opts.get("window", 500),
        alpha=opts.get("alpha", 0.05),
        target_skl=opts.get("target_skl", 1.0),
        training_policies=training,
        likelihood_variants=variants or ("upper", "lower"),
        mc_samples=opts.get("mc_samples", 100_000),
        base_seed=opts["seed"],
        workers=opts.get("workers"),
    )


def _write_experiment_outputs(name, curve, config, out):
    out = Path(out)
    curve.to_csv(out)
    manifest_path = out.with_suffix(".manifest.json")
    extra = {
        "results_csv": str(out),
        "failures": {f"{d}:{label}": c for (d, label), c in curve.failures.items()},
    }
    gaps = getattr(curve, "calibration_gaps", None)
    if gaps:
        extra["max_calibration_gap"] = {str(d): g for d, g in gaps.items()}
    write_manifest(manifest_path, name, config, extra)
    print(f"results: {out}")
    print(f"manifest: {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_skl(args) -> int:
    opts = _resolve_options(args, {"mc_samples", "seed"})
    p = load_model(args.model_p)
    q = load_model(args.model_q)
    rng = np.random.default_rng(opts["seed"])
    est = skl_monte_carlo(p, q, n=opts["mc_samples"], rng=rng)
    print(f"value {est.value!r}")
    print(f"std_error {est.std_error!r}")
    print(f"n_samples {est.n_samples}")
    return 0


def _cmd_change_gen(args) -> int:
    opts = _resolve_options(args, {"target_skl", "seed", "out", "mc_samples"})
    model = load_model(args.model)
    rng = np.random.default_rng(opts["seed"])
    spec = generate_change(model, opts["target_skl"], rng,
                           mc_samples=opts["mc_samples"])
    out = opts["out"] or "change.json"
    save_change(out, spec)
    print(f"change: {out}")
    print(f"method {spec.method}")
    print(f"achieved_skl {spec.achieved_skl.value!r}")
    print(f"rotation_index {spec.rotation_index}")
    return 0


def _cmd_test(args) -> int:
    opts = _resolve_options(args, {"alpha"})
    past = np.loadtxt(args.window_past, delimiter=",").ravel()
    recent = np.loadtxt(args.window_recent, delimiter=",").ravel()
    for name, outcome in (
        ("t-test", welch_t_one_sided(past, recent, opts["alpha"])),
        ("lepage", lepage_test(past, recent, opts["alpha"])),
    ):
        print(
            f"{name} statistic {outcome.statistic!r} "
            f"threshold {outcome.threshold!r} rejected {outcome.rejected}"
        )
    return 0


def _cmd_gaussian_power(args) -> int:
    opts = _resolve_options(
        args,
        {"dims", "runs", "window", "alpha", "target_skl", "seed", "workers",
         "out", "training"},
    )
    training = opts["training"] or ("known", "per-dim:100", "fixed:100")
    config = _experiment_config(opts, training=training)
    curve = gaussian_power_experiment(config)
    return _write_experiment_outputs("gaussian-power", curve, config,
                                     opts["out"] or "results.csv")


def _cmd_gmm_variance(args) -> int:
    opts = _resolve_options(
        args, {"dims", "runs", "window", "seed", "workers", "out", "training"}
    )
    training = opts["training"] or ("per-dim:200",)
    config = _experiment_config(opts, training=training)
    curve = gmm_variance_experiment(config)
    return _write_experiment_outputs("gmm-variance", curve, config,
                                     opts["out"] or "results.csv")


def _cmd_realdata_power(args) -> int:
    opts = _resolve_options(
        args,
        {"dims", "runs", "window", "alpha", "target_skl", "seed", "workers",
         "out", "training", "variant", "mc_samples", "dataset", "path", "k"},
    )
    if not opts["dataset"] or not opts["path"]:
        raise UsageError("realdata-power requires --dataset and --path")
    fmt = {"csv": "generic_csv"}.get(opts["dataset"], opts["dataset"])
    data = load_dataset(opts["path"], fmt)
    training = opts["training"] or ("per-dim:200",)
    config = _experiment_config(opts, training=training, variants=opts["variant"])
    curve = realdata_power_experiment(data, config, k=opts["k"])
    return _write_experiment_outputs("realdata-power", curve, config,
                                     opts["out"] or "results.csv")


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(parser, *names):
    flags = {
        "dims": dict(type=_parse_ints, metavar="D1,D2,...",
                     help="data dimensions to sweep"),
        "runs": dict(type=int, help="repetitions per dimension"),
        "window": dict(type=int, help="window length (default 500)"),
        "alpha": dict(type=float, help="test significance (default 0.05)"),
        "target_skl": dict(type=float, help="change magnitude (default 1)"),
        "seed": dict(type=int, help="base seed (default 0)"),
        "workers": dict(type=int, help="parallel workers (default: cpu count)"),
        "out": dict(type=str, help="output file"),
        "training": dict(type=_parse_strs, metavar="POLICY[,POLICY...]",
                         help="known, per-dim:<c> or fixed:<n>"),
        "variant": dict(type=_parse_strs, metavar="V[,V...]",
                        help="likelihood variants: exact, upper, lower"),
        "mc_samples": dict(type=int, help="Monte-Carlo sample budget"),
        "dataset": dict(type=str, choices=("wine", "miniboone", "csv")),
        "path": dict(type=str, help="dataset file"),
        "k": dict(type=int, help="mixture size (default: 5-fold CV)"),
    }
    for name in names:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            default=None, **flags[name])
    parser.add_argument("--config", default=None,
                        help="key = value file or manifest JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="llcd", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("skl", help="Monte-Carlo sKL between two model files")
    p.add_argument("model_p")
    p.add_argument("model_q")
    _add_common(p, "mc_samples", "seed")
    p.set_defaults(func=_cmd_skl)

    p = sub.add_parser("change-gen", help="calibrated change for a model file")
    p.add_argument("model")
    _add_common(p, "target_skl", "seed", "out", "mc_samples")
    p.set_defaults(func=_cmd_change_gen)

    p = sub.add_parser("test", help="two-window tests on scalar CSV windows")
    p.add_argument("window_past")
    p.add_argument("window_recent")
    _add_common(p, "alpha")
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("gaussian-power", help="power vs dimension, Gaussian streams")
    _add_common(p, "dims", "runs", "window", "alpha", "target_skl", "seed",
                "workers", "out", "training")
    p.set_defaults(func=_cmd_gaussian_power)

    p = sub.add_parser("gmm-variance", help="log-likelihood variance vs dimension")
    _add_common(p, "dims", "runs", "window", "seed", "workers", "out", "training")
    p.set_defaults(func=_cmd_gmm_variance)

    p = sub.add_parser("realdata-power", help="power vs dimension on a dataset")
    _add_common(p, "dims", "runs", "window", "alpha", "target_skl", "seed",
                "workers", "out", "training", "variant", "mc_samples",
                "dataset", "path", "k")
    p.set_defaults(func=_cmd_realdata_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"llcd {args.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(f"llcd {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
