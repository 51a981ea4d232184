"""Command-line entry point.

    degran synth --n 300 --dims 6 --classes 3 --seed 7 --out synth.csv
    degran run data.csv --label-column -1 --c 8 --m 1.2 --model-out model.json
    degran bench data.csv --label-column -1 --out-dir results/
    degran reconstruct --model model.json --data data.csv --label-column -1 --out recon.csv
    degran report results/report.json

Every subcommand also accepts ``--config FILE`` (YAML or JSON) whose keys
are the long flag names with dashes replaced by underscores; explicit flags
win over the file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .augmented import augmented_reconstruct, load_model
from .data import BlobSpec, CsvFormatError, RawDataset, fit_stats, format_csv, load_csv, synth_gaussian
from .evaluation import (
    METHODS,
    ConfigError,
    EvalReport,
    ExperimentConfig,
    default_c_grid,
    default_m_grid,
    format_table,
    grid_csv,
    grid_search,
    reconstruction_error,
)
from .fcm import FcmConfig, fcm_fit
from .granulation import degranulate


class CliError(Exception):
    """Runtime failure reported with exit status 1."""


def _write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise CliError(f"directory {path.parent} does not exist")
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as err:
        raise CliError(f"cannot write {path}: {err.strerror or err}") from err


def _load(args) -> RawDataset:
    try:
        return load_csv(args.data, has_header=not args.no_header, label_column=args.label_column)
    except FileNotFoundError as err:
        raise CliError(f"cannot read {args.data}: no such file") from err
    except (CsvFormatError, ValueError) as err:
        raise CliError(f"{args.data}: {err}") from err


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fuzzifier(text: str) -> float:
    v = float(text)
    if not v > 1:
        raise argparse.ArgumentTypeError(f"m must exceed 1, got {v}")
    return v


def _add_csv_flags(p):
    p.add_argument("--label-column", type=int, default=None,
                   help="0-based index of the class column (negative counts from the end); default none")
    p.add_argument("--no-header", action="store_true", help="the CSV has no header row")


def _add_fcm_flags(p):
    p.add_argument("--epsilon", type=float, default=1e-5, help="stopping threshold on membership change (1e-5)")
    p.add_argument("--max-iter", type=_positive_int, default=200, help="iteration cap (200)")
    p.add_argument("--restarts", type=_positive_int, default=1, help="random restarts per fit (1)")
    p.add_argument("--seed", type=int, default=0, help="random seed (0)")
    p.add_argument("--per-feature", action="store_true",
                   help="divide the reconstruction error by the number of features")
    p.add_argument("--final", choices=("theta", "rowsum"), default="theta",
                   help="final augmented reconstruction form (theta)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degran", description="Granulation-degranulation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded Gaussian-blob dataset")
    p.add_argument("--config", help="YAML/JSON file of flag defaults")
    p.add_argument("--n", type=_positive_int, default=300, help="number of points (300)")
    p.add_argument("--dims", type=_positive_int, default=6, help="number of features (6)")
    p.add_argument("--classes", type=_positive_int, default=3, help="number of blobs (3)")
    p.add_argument("--separation", type=float, default=6.0, help="minimum center distance (6)")
    p.add_argument("--seed", type=int, default=0, help="random seed (0)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="fit once and report both reconstruction errors")
    p.add_argument("--config", help="YAML/JSON file of flag defaults")
    p.add_argument("data", help="input CSV")
    _add_csv_flags(p)
    p.add_argument("--c", type=_positive_int, default=3, help="number of clusters (3)")
    p.add_argument("--m", type=_fuzzifier, default=2.0, help="fuzziness coefficient, > 1 (2.0)")
    _add_fcm_flags(p)
    p.add_argument("--no-normalize", action="store_true", help="skip z-score normalization")
    p.add_argument("--model-out", help="write the augmented model JSON here")
    p.add_argument("--recon-out", help="write the augmented reconstruction CSV here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="cross-validated (c, m) grid benchmark")
    p.add_argument("--config", help="YAML/JSON file of flag defaults")
    p.add_argument("data", help="input CSV")
    _add_csv_flags(p)
    p.add_argument("--grid-c", type=_positive_int, nargs="+", help="explicit cluster counts")
    p.add_argument("--c-min", type=_positive_int, help="smallest cluster count")
    p.add_argument("--c-max", type=_positive_int, help="largest cluster count")
    p.add_argument("--grid-m", type=_fuzzifier, nargs="+", help="fuzziness values (1.2..3.0 step 0.2)")
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds (10)")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--select-on", choices=("train", "total"), default="train",
                   help="error used to pick each fold's (c, m) (train)")
    p.add_argument("--select-method", choices=METHODS, default="augmented",
                   help="method whose error drives the selection (augmented)")
    p.add_argument("--normalize", choices=("global", "fold"), default="global",
                   help="z-score once over the dataset or per training fold (global)")
    p.add_argument("--stratified", action="store_true", help="stratify folds by label")
    _add_fcm_flags(p)
    p.add_argument("--workers", type=_positive_int, default=1, help="concurrent grid cells (1)")
    p.add_argument("--out-dir", default="bench_out", help="directory for report.json, grid.csv, table.txt")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reconstruct", help="decode data with a saved augmented model")
    p.add_argument("--config", help="YAML/JSON file of flag defaults")
    p.add_argument("--model", required=True, help="model JSON written by `run`")
    p.add_argument("--data", required=True, help="CSV of the data to compare against")
    _add_csv_flags(p)
    p.add_argument("--encode", action="store_true",
                   help="recompute the modified partition for this data with the saved prototypes")
    p.add_argument("--per-feature", action="store_true",
                   help="divide the reconstruction error by the number of features")
    p.add_argument("--out", help="write the reconstruction CSV here")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("report", help="render a saved benchmark report")
    p.add_argument("--config", help="YAML/JSON file of flag defaults")
    p.add_argument("report", help="report.json written by `bench`")
    p.add_argument("--grid-out", help="also write the flat grid CSV here")
    p.set_defaults(func=cmd_report)
    return parser


def cmd_synth(args) -> int:
    if args.classes > args.n:
        raise CliError("--classes cannot exceed --n")
    ds, _ = synth_gaussian(args.n, args.dims, args.classes, args.seed,
                           BlobSpec(separation=args.separation))
    _write_text(args.out, format_csv(ds.features, ds.labels, ds.feature_names))
    print(f"wrote {ds.n_points} rows x {ds.n_features + 1} columns to {args.out}")
    return 0


def cmd_run(args) -> int:
    ds = _load(args)
    if args.c > ds.n_points:
        raise CliError(f"--c {args.c} exceeds the number of points ({ds.n_points})")
    stats = None if args.no_normalize else fit_stats(ds.features)
    x = ds.features if stats is None else stats.apply(ds.features)
    cfg = FcmConfig(c=args.c, m=args.m, epsilon=args.epsilon, max_iter=args.max_iter,
                    seed=args.seed, restarts=args.restarts)
    try:
        res = fcm_fit(x, cfg)
        base = degranulate(res.u, res.v, args.m).x_hat
        model = augmented_reconstruct(x, res.v, args.m, final=args.final)
    except (ValueError, ArithmeticError, RuntimeError) as err:
        raise CliError(str(err)) from err
    e_base = reconstruction_error(x, base, per_feature=args.per_feature)
    e_aug = reconstruction_error(x, model.x_hat.x_hat, per_feature=args.per_feature)
    print(f"data: {ds.n_points} x {ds.n_features}  c={args.c} m={args.m:g}")
    print(f"fcm: iterations={res.iterations} converged={res.converged} objective={res.objective!r}")
    print(f"baseline error: {e_base!r}")
    print(f"augmented error: {e_aug!r}")
    print(f"tls fallback: {model.diagnostics.fallback}")
    if args.model_out:
        model.stats = stats
        model.extra = {"c": args.c, "source": ds.source, "per_feature": args.per_feature,
                       "feature_names": ds.feature_names}
        _write_text(args.model_out, model.to_json())
    if args.recon_out:
        xh = model.x_hat.x_hat if stats is None else stats.invert(model.x_hat.x_hat)
        _write_text(args.recon_out, format_csv(xh, ds.labels, ds.feature_names))
    return 0


def _c_grid(args, ds: RawDataset) -> list[int]:
    if args.grid_c:
        return sorted(set(args.grid_c))
    if args.c_min is not None or args.c_max is not None:
        if args.c_min is None or args.c_max is None:
            raise argparse.ArgumentTypeError("--c-min and --c-max must be given together")
        if args.c_min > args.c_max:
            raise argparse.ArgumentTypeError("--c-min exceeds --c-max")
        return list(range(args.c_min, args.c_max + 1))
    if ds.labels is None:
        raise argparse.ArgumentTypeError(
            "no class labels to derive the cluster range; pass --label-column or --grid-c/--c-min/--c-max")
    return default_c_grid(ds.n_classes)


def cmd_bench(args) -> int:
    ds = _load(args)
    c_values = _c_grid(args, ds)
    try:
        cfg = ExperimentConfig(
            c_values=c_values, m_values=args.grid_m or default_m_grid(), folds=args.folds,
            seed=args.seed, methods=args.methods, normalize=args.normalize,
            stratified=args.stratified, select_method=args.select_method, select_on=args.select_on,
            epsilon=args.epsilon, max_iter=args.max_iter, restarts=args.restarts,
            per_feature=args.per_feature, final=args.final,
        )
        if args.stratified and ds.labels is None:
            raise ConfigError("--stratified needs --label-column")
        report = grid_search(ds, cfg, workers=args.workers)
    except ConfigError as err:
        raise argparse.ArgumentTypeError(str(err)) from err
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CliError(f"cannot create {out}: {err.strerror or err}") from err
    table = format_table(report)
    _write_text(out / "report.json", report.to_json())
    _write_text(out / "grid.csv", grid_csv(report))
    _write_text(out / "table.txt", table)
    print(table, end="")
    return 0


def cmd_reconstruct(args) -> int:
    try:
        saved = load_model(Path(args.model).read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise CliError(f"cannot read {args.model}: no such file") from err
    except ValueError as err:
        raise CliError(f"{args.model}: cannot parse model: {err}") from err
    ds = _load(args)
    n_feat = saved.prototypes.shape[1]
    if ds.n_features != n_feat:
        raise CliError(f"dimension mismatch: model expects {n_feat} features, data has {ds.n_features}")
    x = ds.features if saved.stats is None else saved.stats.apply(ds.features)
    if args.encode:
        try:
            x_hat = augmented_reconstruct(x, saved.prototypes, saved.m, final=saved.final).x_hat.x_hat
        except (ValueError, ArithmeticError, RuntimeError) as err:
            raise CliError(str(err)) from err
    else:
        n_model = saved.theta_hat.size
        if ds.n_points != n_model:
            raise CliError(f"dimension mismatch: model encodes {n_model} x {n_feat} data, "
                           f"got {ds.n_points} x {ds.n_features} (use --encode for new data)")
        x_hat = saved.decode()
    err = reconstruction_error(x, x_hat, per_feature=args.per_feature)
    print(f"reconstruction error: {err!r}")
    if args.out:
        xh = x_hat if saved.stats is None else saved.stats.invert(x_hat)
        _write_text(args.out, format_csv(xh, ds.labels, ds.feature_names))
    return 0


def cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
        report = EvalReport.from_dict(doc)
    except FileNotFoundError as err:
        raise CliError(f"cannot read {args.report}: no such file") from err
    except (ValueError, KeyError, TypeError) as err:
        raise CliError(f"{args.report}: cannot parse report: {err}") from err
    print(format_table(report), end="")
    if args.grid_out:
        _write_text(args.grid_out, grid_csv(report))
    return 0


def _apply_config(parser, argv):
    """Parse ``argv``, taking defaults from ``--config`` if one was given."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    try:
        loaded = yaml.safe_load(Path(known.config).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as err:
        parser.error(f"cannot read config {known.config}: {err}")
    if not isinstance(loaded, dict):
        parser.error(f"config {known.config} must be a mapping")
    subparser = choices[command]
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(loaded) - set(actions))
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    for key, val in loaded.items():
        action = actions[key]
        # File values go through the same type checks as flags.
        if action.type is not None:
            try:
                val = ([action.type(str(v)) for v in val] if isinstance(val, list)
                       else action.type(str(val)))
            except (argparse.ArgumentTypeError, ValueError) as err:
                parser.error(f"config key {key}: {err}")
        if action.choices is not None:
            bad = [v for v in (val if isinstance(val, list) else [val]) if v not in action.choices]
            if bad:
                parser.error(f"config key {key}: invalid choice {bad[0]!r}")
        loaded[key] = val
        action.required = False
    subparser.set_defaults(**loaded)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as err:
        parser.error(str(err))
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
