"""Command-line entry point: ``crossgcn <command> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric/runtime
failure (divergence, failed verification, out of memory).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .graphdata import DatasetError, check_cross_rule, load_dataset, make_cross_dataset, save_dataset
from .oracle import TensorTooLarge
from .training import DivergenceError, ExperimentConfig, run_experiment

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("crossgcn")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration files

INT_KEYS = {"layers", "hidden", "order", "epochs", "n_splits", "seed", "gin_hidden"}
FLOAT_KEYS = {"dropout", "weight_decay", "lr"}
STR_KEYS = {"dataset", "variant", "split"}
BOOL_KEYS = {"bias_outside"}
ALIASES = {"base_seed": "seed", "rho": "dropout", "lambda": "weight_decay", "K": "order", "E": "hidden"}


def _coerce(key: str, value):
    def bad(kind):
        return ConfigError(f"{key} must be {kind}, got {value!r}")

    if key in INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if key in FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if key in STR_KEYS:
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if key in BOOL_KEYS:
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if key == "cross_layers":
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise bad("a list of 0/1 toggles")
        return tuple(value)
    if key == "alpha":
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                  for v in value):
            raise bad("a list of numbers")
        return tuple(float(v) for v in value)
    raise ConfigError(f"unknown config key {key!r}")


def _canonical(key: str) -> str:
    key = ALIASES.get(key, key).replace("-", "_")
    if key not in ExperimentConfig.field_names():
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(ExperimentConfig.field_names())}")
    return key


def parse_override(text: str):
    """``key=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = (t.strip() for t in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return _canonical(key), value


def load_config(path=None, overrides=(), seed=None) -> ExperimentConfig:
    """Defaults, then the TOML file, then ``--set`` overrides, then ``--seed``.

    A relative ``dataset`` in the file is resolved against the file's folder.
    """
    values = {}
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        for key, value in raw.items():
            if isinstance(value, dict):
                raise ConfigError(f"{path}: tables are not supported (found [{key}])")
            values[_canonical(key)] = value
        if isinstance(values.get("dataset"), str) and values["dataset"]:
            ds = Path(values["dataset"])
            if not ds.is_absolute():
                values["dataset"] = str(path.parent / ds)
    for text in overrides:
        key, value = parse_override(text)
        values[key] = value
    if seed is not None:
        values["seed"] = seed
    if values.get("gin_hidden") == 0:
        values["gin_hidden"] = None
    try:
        return ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _dataset_for(config: ExperimentConfig):
    if not config.dataset:
        raise ConfigError("no dataset given (set 'dataset' in the config or pass --set dataset=PATH)")
    path = Path(config.dataset)
    if not (path / "meta.json").exists():
        raise ConfigError(f"missing dataset: {path} (run 'crossgcn prepare' first)")
    return load_dataset(path)


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _csv_list(text: str, kind=float) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of {kind.__name__} values, got {text!r}") from None


# --------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    out = Path(args.out)
    if args.synthesize_cross:
        if not args.base:
            raise ConfigError("--synthesize-cross needs --base DIR")
        base = load_dataset(args.base)
        ds = make_cross_dataset(base, args.seed)
        ok = check_cross_rule(ds.features, ds.labels)
        if not ok.all():
            raise FloatingPointError(f"{int((~ok).sum())} node(s) violate the sign rule")
        ds.name = out.name
        save_dataset(ds, out)
        print(f"{out}: {ds.n_nodes} nodes, {ds.n_features} features, {ds.n_classes} classes; "
              f"sign rule holds for all nodes")
        return EXIT_OK
    if args.synthetic:
        from .graphdata import make_synthetic_dataset

        ds = make_synthetic_dataset(n_nodes=args.nodes, n_classes=args.classes, n_features=args.features,
                                    seed=args.seed, name=out.name)
    else:
        if not args.name or not args.input:
            raise ConfigError("prepare needs NAME and --in RAW_DIR (or --synthesize-cross / --synthetic)")
        from .sources import read_source

        ds = read_source(args.input, args.name, fmt=args.format, seed=args.seed)
        ds.name = out.name
    save_dataset(ds, out)
    print(f"{out}: {ds.n_nodes} nodes, {ds.n_edges} edges, {ds.n_features} features, "
          f"{ds.n_classes} classes, label rate {ds.label_rate:.3f}")
    return EXIT_OK


def _epoch_csv(summary) -> str:
    """Per-epoch metrics averaged over the runs (the exact curve for one run)."""
    import numpy as np

    curves = np.array([r.curve for r in summary.runs], dtype=float)
    mean = curves.mean(axis=0)
    lines = ["epoch,loss,train_acc,val_acc"]
    lines += [f"{int(e)},{loss!r},{tr!r},{va!r}" for e, loss, tr, va in mean.tolist()]
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    config = load_config(args.config, args.set, args.seed)
    dataset = _dataset_for(config)
    summary = run_experiment(dataset, config, jobs=args.jobs, keep_params=bool(args.save_params))
    print(summary, file=sys.stderr)
    _write(args.out, summary.to_json() + "\n")
    metrics = args.metrics or (Path(args.out).with_suffix(".csv") if args.out and args.out != "-" else None)
    if metrics:
        _write(metrics, _epoch_csv(summary))
    if args.save_params:
        from .model import save_checkpoint
        from .training import build_model_config

        mcfg = build_model_config(config, dataset.n_features, dataset.n_classes)
        save_checkpoint(args.save_params, mcfg, summary.params[0])
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import SWEEP_AXES, run_sweep, sweep_config, sweep_csv

    config = load_config(args.config, args.set, args.seed)
    kind = int if args.axis in ("hidden", "gin-hidden") else float
    values = _csv_list(args.values, kind) if args.values else list(SWEEP_AXES[args.axis])
    try:
        for v in values:
            sweep_config(config, args.axis, v)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    dataset = _dataset_for(config)
    points = run_sweep(dataset, config, args.axis, values, jobs=args.jobs)
    for v, s in points:
        print(f"{args.axis}={v}: {s}", file=sys.stderr)
    _write(args.out, sweep_csv(args.axis, points))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .experiments import reproduce_table, table_cells

    base = load_config(args.config, args.set, args.seed)
    datasets = _csv_list(args.datasets, str) if args.datasets else None
    table_cells(args.table, datasets)  # validates table and dataset names

    def progress(cell, summary):
        print(f"{cell['id']}: {summary}", file=sys.stderr)

    try:
        result = reproduce_table(args.table, args.data_root, base, datasets, jobs=args.jobs, on_cell=progress)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from None
    report = result.report()
    print(report, end="")
    if args.out:
        out = Path(args.out)
        (out / "cells").mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report, encoding="utf-8")
        (out / "verdicts.json").write_text(json.dumps(result.to_dict(), indent=1) + "\n", encoding="utf-8")
        for cid, summary in result.summaries.items():
            (out / "cells" / f"{cid}.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_checks

    try:
        results = run_checks(order=args.k, dim=args.d, hidden=args.e, nodes=args.n, seed=args.seed,
                             instances=args.instances, trials=args.trials, corrupt=args.corrupt_gradient)
    except (TensorTooLarge, ValueError) as e:
        raise ConfigError(str(e)) from None
    lines = [r.line() for r in results]
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import CSV_HEADER, run_bench

    hidden = _csv_list(args.hidden, int)
    variants = _csv_list(args.variants, str)
    for v in variants:
        if v not in ("gcn", "gin", "cross", "cross-fix"):
            raise ConfigError(f"unknown variant {v!r}")
    if args.epochs < 50:
        log.warning("averaging over %d epochs; at least 50 are recommended", args.epochs)
    rows = run_bench(args.nodes, args.edges, args.features, args.classes, hidden, variants,
                     epochs=args.epochs, warmup=args.warmup, seed=args.seed,
                     on_row=lambda r: print(r.csv(), file=sys.stderr))
    _write(args.out, "\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    import numpy as np

    from .oracle import brute_force_cross_transform, rank1_tensor_from_factors

    x = np.array(_csv_list(args.x))
    factors = [np.array(_csv_list(f)) for f in args.factor]
    if any(f.size != x.size for f in factors):
        raise ConfigError("every --factor needs as many entries as --x")
    try:
        tensor = rank1_tensor_from_factors(*factors)
    except TensorTooLarge as e:
        raise ConfigError(str(e)) from None
    brute = brute_force_cross_transform(x, [tensor], [args.bias])[0]
    factorized = float(np.prod([f @ x for f in factors])) + args.bias
    print(f"brute force: {float(brute)!r}")
    print(f"factorized:  {factorized!r}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_common(p, out_help="output file (default: stdout)"):
    p.add_argument("-c", "--config", help="TOML experiment config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out", help=out_help)
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossgcn", description="Cross-feature graph convolution experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="convert raw data to the dataset layout")
    p.add_argument("name", nargs="?", help="dataset name, e.g. citeseer, cora, pubmed")
    p.add_argument("--in", dest="input", help="folder with the raw source files")
    p.add_argument("--out", required=True, help="dataset folder to write")
    p.add_argument("--format", default="auto", choices=("auto", "planetoid", "linqs", "parquet"))
    p.add_argument("--seed", type=int, default=0,
                   help="seed for synthesized features or for validation/test sets of unsplit sources")
    p.add_argument("--synthesize-cross", action="store_true", help="build the 12-feature sign-rule dataset")
    p.add_argument("--base", help="base dataset folder for --synthesize-cross")
    p.add_argument("--synthetic", action="store_true", help="write a small planted-partition dataset")
    p.add_argument("--nodes", type=int, default=600)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--features", type=int, default=16)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on random splits and summarize test accuracy")
    _add_common(p, "summary JSON (default: stdout); per-epoch CSV goes next to it")
    p.add_argument("--metrics", help="per-epoch CSV path")
    p.add_argument("--save-params", metavar="PATH", help="checkpoint of the first run's best-validation parameters")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="one experiment per value of a hyperparameter")
    _add_common(p, "CSV path (default: stdout)")
    p.add_argument("--axis", required=True, choices=("hidden", "alpha2", "dropout", "gin-hidden"))
    p.add_argument("--values", help="comma-separated axis values (default: the standard grid)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a results table and compare with the reference numbers")
    p.add_argument("table", choices=("3", "4", "5"))
    _add_common(p, "folder for report.txt, verdicts.json and per-cell JSON")
    p.add_argument("--data-root", default="data", help="folder holding the prepared datasets")
    p.add_argument("--datasets", help="comma-separated subset of the table's datasets")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("gradcheck", help="oracle equivalence and finite-difference checks")
    p.add_argument("--k", type=int, default=2, help="highest order checked")
    p.add_argument("--d", type=int, default=4, help="largest input dimension")
    p.add_argument("--e", type=int, default=3, help="largest hidden width")
    p.add_argument("--n", type=int, default=8, help="nodes in the toy graphs")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--trials", type=int, default=100, help="rank-1 trials per order")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report file (default: stdout)")
    p.add_argument("--corrupt-gradient", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="average epoch time on a random graph")
    p.add_argument("--nodes", type=int, default=30_000)
    p.add_argument("--edges", type=int, default=386_742)
    p.add_argument("--features", type=int, default=602)
    p.add_argument("--classes", type=int, default=41)
    p.add_argument("--hidden", default="32,64,128,256,512,1024")
    p.add_argument("--variants", default="gcn,gin,cross")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="brute-force vs factorized output for one rank-1 unit")
    p.add_argument("--x", required=True, help="input vector, comma-separated")
    p.add_argument("--factor", action="append", required=True, help="one factor vector (repeat per order)")
    p.add_argument("--bias", type=float, default=0.0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DivergenceError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, DatasetError, TensorTooLarge, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError:
        print("error: out of memory; try fewer nodes or smaller hidden sizes", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
