"""Hyperparameter sweeps and table reproduction on top of the experiment runner."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .graphdata import load_dataset
from .training import ExperimentConfig, run_experiment

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "hidden": (16, 32, 64, 128),
    "alpha2": (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0),
    "dropout": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
    "gin-hidden": (32, 64, 128, 256),
}


# --------------------------------------------------------------------------
# sweeps


def sweep_config(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """The configuration for one point of a sweep along ``axis``."""
    if axis == "hidden":
        return config.with_overrides(hidden=int(value))
    if axis == "dropout":
        return config.with_overrides(dropout=float(value))
    if axis == "gin-hidden":
        if config.variant != "gin":
            raise ValueError("the gin-hidden sweep needs variant = 'gin'")
        return config.with_overrides(gin_hidden=int(value))
    if axis == "alpha2":
        if config.variant not in ("cross", "cross-fix"):
            raise ValueError("the alpha2 sweep needs a cross variant")
        # single layer, alpha1 pinned at 1, alpha2 held fixed
        return config.with_overrides(variant="cross-fix", layers=1, order=2, cross_layers=None,
                                     alpha=(1.0, float(value)))
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def run_sweep(dataset, config: ExperimentConfig, axis: str, values=None, jobs: int = 1) -> list:
    """One experiment per axis value; returns ``[(value, summary), ...]`` sorted by value."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = sorted(SWEEP_AXES[axis] if values is None else values)
    configs = [(v, sweep_config(config, axis, v)) for v in values]
    return [(v, run_experiment(dataset, c, jobs=jobs)) for v, c in configs]


def sweep_csv(axis: str, points: list) -> str:
    lines = [f"{axis},mean_test_acc,std_test_acc,splits"]
    for value, s in points:
        std = "" if s.std is None else repr(s.std)
        lines.append(f"{value!r},{s.mean!r},{std},{len(s.runs)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# reproduction


def load_targets() -> dict:
    text = resources.files("crossgcn").joinpath("data/targets.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    if doc.get("v") != 1:
        raise ValueError(f"unsupported targets file version {doc.get('v')}")
    return doc


def table_cells(table: str, datasets=None) -> list:
    tables = load_targets()["tables"]
    if str(table) not in tables:
        raise ValueError(f"unknown table {table!r}; choose from {', '.join(sorted(tables))}")
    cells = tables[str(table)]["cells"]
    if datasets:
        unknown = set(datasets) - {c["dataset"] for c in cells}
        if unknown:
            raise ValueError(f"table {table} has no dataset {', '.join(sorted(unknown))}")
        cells = [c for c in cells if c["dataset"] in datasets]
    return cells


def _describe(check: dict) -> str:
    kind = check["kind"]
    if kind == "min":
        return f"{check['cell']} >= {check['value']:g}"
    if kind == "within":
        return f"|{check['cell']} - {check['value']:g}| <= {check['tol']:g}"
    if kind == "gap":
        return f"{check['a']} - {check['b']} >= {check['min']:g}"
    if kind == "ge":
        return f"{check['a']} >= {check['b']}"
    if kind == "approx":
        return f"|{check['a']} - {check['b']}| <= {check['tol']:g}"
    raise ValueError(f"unknown check kind {kind!r}")


def evaluate_check(check: dict, means: dict):
    """``(passed, observed)`` in percent points, or ``(None, None)`` when a cell did not run."""
    kind = check["kind"]
    names = [check["cell"]] if "cell" in check else [check["a"], check["b"]]
    if any(n not in means for n in names):
        return None, None
    if kind == "min":
        obs = means[check["cell"]]
        return obs >= check["value"], obs
    if kind == "within":
        obs = means[check["cell"]]
        return abs(obs - check["value"]) <= check["tol"], obs
    obs = means[check["a"]] - means[check["b"]]
    if kind == "gap":
        return obs >= check["min"], obs
    if kind == "ge":
        return obs >= 0.0, obs
    if kind == "approx":
        return abs(obs) <= check["tol"], obs
    raise ValueError(f"unknown check kind {kind!r}")


@dataclass
class TableResult:
    table: str
    caption: str
    cells: list
    summaries: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            s = self.summaries[c["id"]]
            cells.append({
                "id": c["id"], "label": c["label"], "dataset": c["dataset"], "config": c["config"],
                "mean": 100.0 * s.mean, "std": None if s.std is None else 100.0 * s.std,
                "splits": len(s.runs), "paper_mean": c["paper"][0], "paper_std": c["paper"][1],
            })
        return {"v": 1, "table": self.table, "caption": self.caption, "cells": cells, "checks": self.checks,
                "passed": all(ch["passed"] is not False for ch in self.checks)}

    def report(self) -> str:
        lines = [f"Table {self.table}: {self.caption}", ""]
        lines.append(f"{'cell':<22} {'dataset':<15} {'reproduced':>14} {'paper':>12}")
        for c in self.cells:
            s = self.summaries[c["id"]]
            std = "n/a" if s.std is None else f"{100 * s.std:.1f}"
            lines.append(f"{c['id']:<22} {c['dataset']:<15} {100 * s.mean:>8.1f} +- {std:>3} "
                         f"{c['paper'][0]:>6.1f} +- {c['paper'][1]:.1f}")
        lines.append("")
        for ch in self.checks:
            verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[ch["passed"]]
            obs = "" if ch["observed"] is None else f"  (observed {ch['observed']:.1f})"
            lines.append(f"{verdict}  {ch['check']}{obs}")
        return "\n".join(lines) + "\n"


def reproduce_table(table: str, data_root, base: ExperimentConfig, datasets=None, jobs: int = 1,
                    on_cell=None) -> TableResult:
    """Run every cell of ``table`` and evaluate its checks.

    Each cell's configuration is ``base`` with the cell's overrides applied.
    All needed datasets are located before anything is trained.
    """
    spec = load_targets()["tables"][str(table)]
    cells = table_cells(table, datasets)
    root = Path(data_root)
    needed = sorted({c["dataset"] for c in cells})
    missing = [d for d in needed if not (root / d / "meta.json").exists()]
    if missing:
        raise FileNotFoundError(f"missing dataset(s) under {root}: {', '.join(missing)}")
    loaded = {d: load_dataset(root / d) for d in needed}
    result = TableResult(str(table), spec["caption"], cells)
    for c in cells:
        overrides = dict(c["config"])
        toggles = overrides.get("cross_layers")
        overrides["cross_layers"] = tuple(toggles) if toggles is not None else None
        cfg = base.with_overrides(dataset=str(root / c["dataset"]), **overrides)
        summary = run_experiment(loaded[c["dataset"]], cfg, jobs=jobs)
        result.summaries[c["id"]] = summary
        if on_cell:
            on_cell(c, summary)
    means = {cid: 100.0 * s.mean for cid, s in result.summaries.items()}
    for ch in spec["checks"]:
        passed, observed = evaluate_check(ch, means)
        result.checks.append({"check": _describe(ch), "kind": ch["kind"], "passed": passed, "observed": observed})
    return result
