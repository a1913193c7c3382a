"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every flag can also be set from a JSON file given with ``--config``; keys are
flag names with dashes or underscores (``"batch_size": 128``). Flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .architecture import (
    NetworkConfig,
    network_kernel_lengths,
    network_receptive_field,
    parameter_breakdown,
    parameter_count,
)
from .data import SyntheticSpec, generate_raw, load_ucr, read_ucr_split, save_ucr
from .ensemble import DEFAULT_SIZE, load_ensemble, mean_probabilities, train_ensemble
from .errors import ConfigError, InceptionTimeError
from .stats import AccuracyMatrix, cd_report
from .sweep import run_sweep
from .training import TrainConfig, accuracy_from_proba

WORKERS_ENV = "INCEPTIONTIME_WORKERS"
log = logging.getLogger("inceptiontime")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- manifest


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


class Manifest:
    """Collects what is needed to rerun a command and writes it once at the end."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.started = time.perf_counter()
        self.data = {
            "command": command,
            "argv": sys.argv[1:],
            "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
            "seeds": [],
            "inputs": {},
            "artifacts": [],
            "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "code_version": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        }

    def input(self, path) -> None:
        self.data["inputs"][str(path)] = file_digest(path)

    def artifact(self, path) -> None:
        self.data["artifacts"].append(str(path))

    def write(self, path, **extra) -> Path:
        self.data.update(extra)
        self.data["seconds"] = round(time.perf_counter() - self.started, 3)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n")
        return path


# --------------------------------------------------------------------------- helpers


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer")


def network_config_from_args(args, num_classes: int, input_channels: int = 1) -> NetworkConfig:
    base = NetworkConfig(num_classes=num_classes, input_channels=input_channels,
                         depth=args.depth, residual=not args.no_residual)
    config = base.with_module(filter_lengths=tuple(args.filter_lengths),
                              filters_per_branch=args.filters,
                              bottleneck_size=args.bottleneck_size or args.filters,
                              use_bottleneck=not args.no_bottleneck,
                              use_maxpool_branch=not args.no_maxpool)
    config.validate()
    return config


def _add_architecture(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("architecture")
    g.add_argument("--depth", type=_positive, default=6, help="number of inception modules")
    g.add_argument("--filter-lengths", type=_int_list, default=(10, 20, 40),
                   help="comma-separated convolution lengths per module (default 10,20,40)")
    g.add_argument("--filters", type=_positive, default=32, help="filters per branch")
    g.add_argument("--bottleneck-size", type=_positive, default=None,
                   help="bottleneck width m (default: same as --filters)")
    g.add_argument("--no-bottleneck", action="store_true")
    g.add_argument("--no-residual", action="store_true")
    g.add_argument("--no-maxpool", action="store_true", help="drop the max-pooling branch")


def _add_training(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=_positive, default=1500)
    g.add_argument("--batch-size", type=_positive, default=64)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--plateau-factor", type=float, default=0.5)
    g.add_argument("--plateau-patience", type=_positive, default=50)
    g.add_argument("--min-lr", type=float, default=1e-4)
    g.add_argument("--dtype", choices=["float32", "float64"], default="float32")


# --------------------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    spec = SyntheticSpec(length=args.length, n_classes=args.classes, n_train=args.instances,
                         n_test=args.test_instances, noise_low=args.noise_low,
                         noise_high=args.noise_high, amplitude=args.amplitude,
                         pattern_fraction=args.pattern_fraction,
                         starts=args.starts, seed=args.seed)
    spec.validate()
    ds = generate_raw(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_path, test_path = out / f"{args.name}_TRAIN.tsv", out / f"{args.name}_TEST.tsv"
    save_ucr(ds, train_path, test_path)
    m = Manifest("generate", args)
    m.data["seeds"] = [args.seed]
    m.data["generator"] = spec.to_dict()
    m.artifact(train_path)
    m.artifact(test_path)
    m.write(out / f"{args.name}_manifest.json")
    print(f"wrote {train_path} ({spec.n_train} rows) and {test_path} ({spec.n_test} rows)")
    return 0


def cmd_train(args) -> int:
    ds = load_ucr(args.train, args.test or args.train, normalize=not args.no_normalize)
    config = network_config_from_args(args, ds.n_classes, ds.n_channels)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       plateau_factor=args.plateau_factor,
                       plateau_patience=args.plateau_patience, min_lr=args.min_lr)
    tcfg.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = Manifest("train", args)
    m.input(args.train)
    if args.test:
        m.input(args.test)
    m.data["network_config"] = config.to_dict()
    m.data["train_config"] = tcfg.to_dict()
    m.data["seeds"] = []
    log.info("training %d run(s) of %d member(s), %d parameters each", args.runs, args.n,
             parameter_count(config))
    runs = []
    for r in range(args.runs):
        # run r owns the seed block [seed + r*n, seed + (r+1)*n)
        run_dir = out if args.runs == 1 else out / f"run{r:02d}"
        model, histories = train_ensemble(ds, config, args.n, args.seed + r * args.n, tcfg,
                                          _workers(args), dtype=np.dtype(args.dtype))
        model.metadata = {"label_map": {str(k): v for k, v in ds.label_map.items()},
                          "normalize": not args.no_normalize, "length": ds.length}
        m.artifact(model.save(run_dir / "model"))
        m.data["seeds"].extend(model.seeds)
        for j, h in enumerate(histories):
            m.artifact(h.to_csv(run_dir / f"history_member{j:03d}.csv"))
        run = {"members": len(model), "seeds": model.seeds,
               "train_loss": [min(h.loss) for h in histories]}
        if args.test:
            x, y = ds.split("test")
            run["member_accuracy"] = [accuracy_from_proba(mm.forward(x), y)
                                      for mm in model.members]
            run["accuracy"] = accuracy_from_proba(model.predict_proba(x), y)
        runs.append(run)
        print(f"saved {len(model)} member(s) to {run_dir / 'model'}")
    result = dict(runs[0]) if args.runs == 1 else {"runs": runs}
    if args.test:
        accuracies = [run["accuracy"] for run in runs]
        result["accuracy_median"] = float(np.median(accuracies))
        print(f"test accuracy {result['accuracy_median']:.4f}"
              + (f" (median of {args.runs} runs)" if args.runs > 1 else ""))
    m.write(out / "experiment.json", result=result)
    return 0


def _load_for_inference(args):
    model = load_ensemble(args.model)
    meta = model.metadata
    label_map = {int(k): v for k, v in meta["label_map"].items()} if "label_map" in meta \
        else None
    x, y = read_ucr_split(args.data, label_map, normalize=meta.get("normalize", True))
    if x.shape[1] != model.config.input_channels:
        raise ConfigError(f"model expects {model.config.input_channels} channels, data has "
                          f"{x.shape[1]}")
    if y.max(initial=0) > model.config.num_classes:
        raise ConfigError(f"data has label {y.max()} but the model outputs "
                          f"{model.config.num_classes} classes")
    return model, label_map, x, y


def cmd_predict(args) -> int:
    model, label_map, x, y = _load_for_inference(args)
    proba = model.predict_proba(x)
    pred = np.argmax(proba, axis=1) + 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    c = proba.shape[1]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "predicted", "predicted_label",
                    *[f"p{k}" for k in range(1, c + 1)]])
        for i in range(len(pred)):
            name = label_map.get(int(pred[i]), str(pred[i])) if label_map else str(pred[i])
            w.writerow([i, int(y[i]), int(pred[i]), name, *(repr(float(p)) for p in proba[i])])
    m = Manifest("predict", args)
    m.input(args.data)
    m.artifact(out)
    m.write(args.manifest or out.with_suffix(".manifest.json"))
    print(f"wrote {len(pred)} predictions to {out}")
    return 0


def cmd_evaluate(args) -> int:
    model, _, x, y = _load_for_inference(args)
    member_probs = [mm.forward(x) for mm in model.members]
    result = {"n": int(len(y)), "members": len(model),
              "accuracy": accuracy_from_proba(mean_probabilities(member_probs), y),
              "member_accuracy": [accuracy_from_proba(p, y) for p in member_probs]}
    text = json.dumps(result, indent=2)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        m = Manifest("evaluate", args)
        m.input(args.data)
        m.artifact(out)
        m.write(args.manifest or out.with_suffix(".manifest.json"), result=result)
    print(text)
    return 0


def cmd_rf(args) -> int:
    config = network_config_from_args(args, num_classes=2)
    rf = network_receptive_field(config)
    if args.json:
        print(json.dumps({"receptive_field": rf,
                          "kernel_lengths": network_kernel_lengths(config)}))
    else:
        print(rf)
    if args.manifest:
        Manifest("rf", args).write(args.manifest, result={"receptive_field": rf})
    return 0


def cmd_params(args) -> int:
    config = network_config_from_args(args, args.classes, args.channels)
    total = parameter_count(config)
    breakdown = parameter_breakdown(config)
    if args.json:
        print(json.dumps({"total": total, "layers": breakdown}, indent=2))
    else:
        width = max(len(k) for k in breakdown)
        for name, count in breakdown.items():
            print(f"{name:<{width}}  {count:>10,}")
        print(f"{'total':<{width}}  {total:>10,}")
    if args.manifest:
        Manifest("params", args).write(args.manifest, result={"total": total})
    return 0


def cmd_sweep(args) -> int:
    grid_path = Path(args.grid)
    try:
        grid = json.loads(grid_path.read_text())
    except FileNotFoundError:
        raise InceptionTimeError(f"grid file not found: {grid_path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"grid file {grid_path} is not valid JSON: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    m = Manifest("sweep", args)
    m.input(grid_path)
    summary = run_sweep(grid, out, _workers(args))
    m.artifact(out)
    m.data["seeds"] = grid.get("seeds", [0])
    m.write(args.manifest or out.with_suffix(".manifest.json"), result=summary)
    print(f"{summary['computed']} row(s) computed, {summary['skipped']} already done, "
          f"{summary['failed']} failed -> {out}")
    return 0


def cmd_compare(args) -> int:
    matrix = AccuracyMatrix.from_csv(args.csv)
    report = cd_report(matrix, args.alpha, args.tie_tolerance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = Manifest("compare", args)
    m.input(args.csv)
    for path in (out / "report.json", out / "ranks.csv", out / "pairwise.csv"):
        m.artifact(path)
    report.to_json(out / "report.json")
    report.ranks_csv(out / "ranks.csv")
    report.pairwise_csv(out / "pairwise.csv")
    m.write(out / "experiment.json")
    print(f"Friedman statistic {report.friedman_statistic:.4f}, "
          f"p = {report.friedman_pvalue:.4g} ({report.summary})")
    for name in sorted(report.classifiers, key=report.average_ranks.get):
        print(f"  {name}: average rank {report.average_ranks[name]:.3f}")
    for p in report.pairwise:
        mark = "*" if p.significant else " "
        print(f" {mark}{p.a} vs {p.b}: p = {p.pvalue:.4g}, win/tie/loss "
              f"{p.wins}/{p.ties}/{p.losses}")
    for i, clique in enumerate(report.cliques):
        print(f"  clique {i}: {', '.join(clique)}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inceptiontime",
        description="Train, evaluate and study ensembles of Inception networks for time "
                    "series classification.",
        epilog=f"Exit codes: 0 success, 1 runtime failure, 2 usage error. "
               f"{WORKERS_ENV} sets the default worker-pool size.")
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file of flag values; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="write a synthetic dataset in UCR format")
    p.add_argument("--length", type=_positive, required=True, help="series length T")
    p.add_argument("--classes", type=_positive, default=2)
    p.add_argument("--instances", type=_positive, default=128, help="training rows")
    p.add_argument("--test-instances", type=_positive, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-low", type=float, default=0.0)
    p.add_argument("--noise-high", type=float, default=0.1)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--pattern-fraction", type=float, default=0.1)
    p.add_argument("--starts", type=_int_list, default=None,
                   help="pattern start per class, comma-separated (default: evenly spread)")
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an ensemble on a UCR-format dataset")
    p.add_argument("--train", required=True, help="training split file")
    p.add_argument("--test", help="test split file; accuracy is reported when given")
    p.add_argument("--n", type=_positive, default=DEFAULT_SIZE, help="ensemble size")
    p.add_argument("--seed", type=int, default=0, help="member j uses seed + j")
    p.add_argument("--runs", type=_positive, default=1,
                   help="independent ensembles; the median test accuracy is reported")
    p.add_argument("--workers", type=_positive, default=None,
                   help=f"parallel member training (default ${WORKERS_ENV} or 1)")
    p.add_argument("--no-normalize", action="store_true", help="skip z-normalization")
    p.add_argument("--out", required=True, help="output directory")
    _add_architecture(p)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("predict", cmd_predict, "per-series class probabilities"),
                                  ("evaluate", cmd_evaluate, "accuracy of a saved model")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True, help="ensemble directory or checkpoint file")
        p.add_argument("--data", required=True, help="UCR-format file")
        p.add_argument("--out", required=(name == "predict"),
                       help="predictions CSV" if name == "predict" else "accuracy JSON")
        p.add_argument("--manifest", help="manifest path (default: next to --out)")
        p.set_defaults(func=func)

    p = sub.add_parser("rf", help="receptive field of an architecture")
    _add_architecture(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_rf)

    p = sub.add_parser("params", help="parameter count and per-layer breakdown")
    _add_architecture(p)
    p.add_argument("--classes", type=_positive, default=2)
    p.add_argument("--channels", type=_positive, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("sweep", help="run a resumable experiment grid")
    p.add_argument("--grid", required=True, help="JSON grid specification")
    p.add_argument("--out", required=True, help="results CSV (appended, resumable)")
    p.add_argument("--workers", type=_positive, default=None)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="statistical comparison of classifiers")
    p.add_argument("--csv", required=True,
                   help="accuracy table: header of classifier names, one row per dataset")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tie-tolerance", type=float, default=0.0)
    p.add_argument("--out", default="comparison")
    p.set_defaults(func=cmd_compare)
    return parser


def _subparser_choices(parser: argparse.ArgumentParser) -> dict:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _apply_config_file(parser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: config-file values become defaults, explicit flags override them."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        values = json.loads(Path(known.config).read_text())
    except FileNotFoundError:
        parser.error(f"config file not found: {known.config}")
    except json.JSONDecodeError as exc:
        parser.error(f"config file {known.config} is not valid JSON: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    commands = _subparser_choices(parser)
    command = next((tok for tok in rest if tok in commands), None)
    if command is None:
        return parser.parse_args(argv)
    sub = commands[command]
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            parser.error(f"config file key {key!r} is not an option of {command}")
        action = dests[dest]
        if action.type is not None and isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        if action.type is not None and value is not None:
            try:
                value = action.type(str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config file key {key!r}: {exc}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    # required flags supplied by the file no longer need to be on the command line
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (InceptionTimeError, OSError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
