"""Plot-ready report files: results.csv, summary.json and per-run beta histograms."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..losses import BETA_BINS
from .experiment import RunResult

FORMAT_VERSION = 1
CSV_COLUMNS = ["run_id", "kind", "method", "seed", "epoch", "split", "top1", "top5", "loss",
               "beta_mean", "beta_frac_half"]
METRIC_COLUMNS = ["top1", "top5", "loss", "beta_mean", "beta_frac_half"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_rows(result: RunResult) -> list[dict]:
    """One row per (role, split, seed) followed by an aggregate ``seed=mean`` row."""
    rows = []
    for role, entry in result.roles.items():
        for split in result.splits(role):
            seed_rows = []
            for seed in result.seeds:
                m = entry["per_seed"].get(str(seed), {}).get(split)
                if m is None:
                    continue
                row = {"run_id": f"{result.run_id}/{role}", "kind": result.kind,
                       "method": entry["method"], "seed": seed, "epoch": m.get("epoch"),
                       "split": split}
                row.update({c: m.get(c) for c in METRIC_COLUMNS})
                seed_rows.append(row)
            if not seed_rows:
                continue
            agg = {"run_id": f"{result.run_id}/{role}", "kind": result.kind,
                   "method": entry["method"], "seed": "mean", "epoch": seed_rows[0]["epoch"],
                   "split": split}
            for c in METRIC_COLUMNS:
                vals = [r[c] for r in seed_rows if r[c] is not None]
                agg[c] = float(np.mean(vals)) if vals else None
            rows.extend(seed_rows)
            rows.append(agg)
    return rows


def _beta_hist_rows(result: RunResult) -> list[list]:
    """Histogram counts summed over seeds: one row per (epoch, bin)."""
    entry = result.roles.get(result.primary)
    if entry is None or entry["method"] != "AdaptConf":
        return []
    by_epoch: dict[int, np.ndarray] = {}
    for seed in result.seeds:
        for e in entry["series"].get(str(seed), []):
            if e.get("beta") is None:
                continue
            counts = np.asarray(e["beta"]["histogram"], dtype=np.int64)
            by_epoch[e["epoch"]] = by_epoch.get(e["epoch"], 0) + counts
    edges = np.linspace(0.0, 0.5, BETA_BINS + 1)
    rows = []
    for epoch in sorted(by_epoch):
        for b in range(BETA_BINS):
            rows.append([result.run_id, epoch, b, repr(float(edges[b])), repr(float(edges[b + 1])),
                         int(by_epoch[epoch][b])])
    return rows


def summary(result: RunResult) -> dict:
    per_seed = {}
    for role, entry in result.roles.items():
        per_seed[role] = entry["per_seed"]
    return {
        "run_id": result.run_id,
        "kind": result.kind,
        "method": result.method,
        "status": result.status,
        "error": result.error,
        "seeds": result.seeds,
        "primary": result.primary,
        "reference": result.reference,
        "per_seed": per_seed,
        "aggregate": result.aggregate(),
        "delta": result.delta(),
        "wall_clock_seconds": result.wall_clock,
        "extra": result.extra,
        "config": result.config,
    }


def emit_report(results: list[RunResult], out_dir) -> list[Path]:
    """Write (overwriting) results.csv, summary.json and <run_id>/beta_hist.csv files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for result in results:
            for row in csv_rows(result):
                writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    written.append(csv_path)

    summary_path = out / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump({"format_version": FORMAT_VERSION, "runs": [summary(r) for r in results]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)

    for result in results:
        run_dir = out / result.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / "run_result.json", "w") as fh:
            json.dump(result.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append(run_dir / "run_result.json")
        rows = _beta_hist_rows(result)
        if rows:
            path = run_dir / "beta_hist.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["run_id", "epoch", "bin", "bin_lo", "bin_hi", "count"])
                writer.writerows(rows)
            written.append(path)
    return written


def load_results(paths) -> list[RunResult]:
    """Collect run_result.json files from the given files or directories (searched recursively)."""
    found = []
    for p in paths:
        p = Path(p)
        files = sorted(p.rglob("run_result.json")) if p.is_dir() else [p]
        for f in files:
            with open(f) as fh:
                found.append(RunResult.from_dict(json.load(fh)))
    return found
