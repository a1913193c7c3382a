"""Resumable experiment grids: architecture x dataset x seed, one CSV row per point."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path

import numpy as np

from .architecture import NetworkConfig, network_receptive_field, parameter_count
from .data import SyntheticSpec, generate_synthetic, load_ucr
from .ensemble import train_ensemble
from .errors import ConfigError
from .training import TrainConfig, evaluate

log = logging.getLogger(__name__)

COLUMNS = ["row_hash", "dataset", "length", "classes", "depth", "filter_lengths", "filters",
           "bottleneck", "residual", "ensemble", "seed", "status", "accuracy", "train_loss",
           "rf", "params", "seconds", "error"]

_ARCH_KEYS = {"depth": 6, "filter_lengths": [10, 20, 40], "filters": 32,
              "bottleneck_size": None, "bottleneck": True, "residual": True}


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


def expand_grid(grid: dict) -> list[dict]:
    """Cross product of every list-valued entry; scalars are fixed.

    Grid layout (all keys optional)::

        {"architecture": {"depth": [3, 6], "filter_lengths": [[10, 20, 40]], ...},
         "data": {"length": [128, 256], "classes": [2], "n_train": 128, "n_test": 1024,
                  "ucr": [{"name": ..., "train": ..., "test": ...}]},
         "train": {"epochs": 200, "batch_size": 128},
         "seeds": [0, 1, 2], "ensemble": 1}

    An empty list anywhere gives an empty grid. ``filter_lengths`` values are
    lists, so a single length set must still be wrapped: ``[[2, 4, 8]]``.
    """
    arch = dict(grid.get("architecture", {}))
    unknown = set(arch) - set(_ARCH_KEYS)
    if unknown:
        raise ConfigError(f"unknown architecture keys in grid: {sorted(unknown)}")
    if "filter_lengths" in arch and arch["filter_lengths"] and \
            not isinstance(arch["filter_lengths"][0], list):
        arch["filter_lengths"] = [arch["filter_lengths"]]
    arch_axes = {k: _as_list(arch.get(k, v if k != "filter_lengths" else [v]))
                 for k, v in _ARCH_KEYS.items()}
    data = dict(grid.get("data", {}))
    datasets: list[dict] = []
    if "ucr" in data:
        for entry in _as_list(data["ucr"]):
            datasets.append({"kind": "ucr", **entry})
    if "length" in data or "ucr" not in data:
        fixed = {k: data[k] for k in ("n_train", "n_test", "starts", "noise_high",
                                      "pattern_fraction") if k in data}
        for length, classes in itertools.product(_as_list(data.get("length", [128])),
                                                 _as_list(data.get("classes", [2]))):
            datasets.append({"kind": "synthetic", "length": length, "classes": classes,
                             **fixed})
    seeds = _as_list(grid.get("seeds", [0]))
    train_cfg = dict(grid.get("train", {}))
    n_members = int(grid.get("ensemble", 1))
    rows = []
    names = list(arch_axes)
    for values in itertools.product(*(arch_axes[k] for k in names)):
        arch_point = dict(zip(names, values))
        for ds, seed in itertools.product(datasets, seeds):
            row = {"architecture": arch_point, "data": ds, "seed": seed,
                   "train": train_cfg, "ensemble": n_members}
            row["row_hash"] = row_hash(row)
            rows.append(row)
    return rows


def row_hash(row: dict) -> str:
    body = {k: v for k, v in row.items() if k != "row_hash"}
    blob = json.dumps(body, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def row_network_config(row: dict, num_classes: int) -> NetworkConfig:
    a = row["architecture"]
    base = NetworkConfig(num_classes=num_classes, depth=int(a["depth"]),
                         residual=bool(a["residual"]))
    return base.with_module(filter_lengths=tuple(a["filter_lengths"]),
                            filters_per_branch=int(a["filters"]),
                            bottleneck_size=int(a["bottleneck_size"] or a["filters"]),
                            use_bottleneck=bool(a["bottleneck"]))


def _load_row_data(row: dict):
    d = row["data"]
    if d["kind"] == "ucr":
        return load_ucr(d["train"], d["test"], name=d.get("name"))
    spec = SyntheticSpec(length=int(d["length"]), n_classes=int(d["classes"]),
                         n_train=int(d.get("n_train", 128)), n_test=int(d.get("n_test", 1024)),
                         noise_high=float(d.get("noise_high", 0.1)),
                         pattern_fraction=float(d.get("pattern_fraction", 0.1)),
                         starts=tuple(d["starts"]) if d.get("starts") else None,
                         seed=int(row["seed"]))
    return generate_synthetic(spec)


def run_row(row: dict) -> dict:
    """Train and evaluate one grid point. Failures are returned, not raised."""
    start = time.perf_counter()
    a, d = row["architecture"], row["data"]
    out = {"row_hash": row["row_hash"], "dataset": d.get("name", "synthetic"),
           "length": d.get("length", ""), "classes": d.get("classes", ""),
           "depth": a["depth"], "filter_lengths": "-".join(map(str, a["filter_lengths"])),
           "filters": a["filters"], "bottleneck": a["bottleneck"], "residual": a["residual"],
           "ensemble": row["ensemble"], "seed": row["seed"], "status": "ok", "accuracy": "",
           "train_loss": "", "rf": "", "params": "", "seconds": "", "error": ""}
    try:
        ds = _load_row_data(row)
        out["length"], out["classes"] = ds.length, ds.n_classes
        config = row_network_config(row, ds.n_classes)
        out["rf"] = network_receptive_field(config)
        out["params"] = parameter_count(config)
        tcfg = replace(TrainConfig(), **row["train"])
        model, histories = train_ensemble(ds, config, row["ensemble"], int(row["seed"]), tcfg)
        out["accuracy"] = evaluate(model, ds, "test")
        out["train_loss"] = float(np.mean([min(h.loss) for h in histories]))
    except Exception as exc:  # recorded per row, the sweep carries on
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    out["seconds"] = round(time.perf_counter() - start, 3)
    return out


def completed_hashes(path: Path) -> set[str]:
    if not path.exists():
        return set()
    with path.open(newline="") as fh:
        return {r["row_hash"] for r in csv.DictReader(fh) if r.get("status") == "ok"}


def run_sweep(grid: dict, out_path, workers: int | None = None) -> dict:
    """Run every grid point whose hash is not already recorded as ``ok`` in ``out_path``.

    Rows are appended as they finish by this process only. Failed rows are
    written with their error and retried on the next run.
    """
    out_path = Path(out_path)
    rows = expand_grid(grid)
    if workers is None:
        workers = int(os.environ.get("INCEPTIONTIME_WORKERS", "1"))
    done = completed_hashes(out_path)
    todo = [r for r in rows if r["row_hash"] not in done]
    fresh = not out_path.exists() or out_path.stat().st_size == 0
    results = []
    with out_path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        if fresh:
            writer.writeheader()
            fh.flush()

        def record(result: dict) -> None:
            writer.writerow(result)
            fh.flush()
            results.append(result)
            log.info("row %s %s acc=%s", result["row_hash"], result["status"],
                     result["accuracy"])

        if workers <= 1 or len(todo) <= 1:
            for r in todo:
                record(run_row(r))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for fut in as_completed([pool.submit(run_row, r) for r in todo]):
                    record(fut.result())
    return {"total": len(rows), "skipped": len(rows) - len(todo), "computed": len(results),
            "failed": sum(r["status"] != "ok" for r in results),
            "computed_hashes": [r["row_hash"] for r in results]}
