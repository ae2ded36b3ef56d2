"""Campaign execution, aggregation and CSV/JSON export."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .config import CampaignConfig
from .scenarios import PIPELINES

WORKERS_ENV = "AIRLOC_WORKERS"

METRICS = ("victim_error_m", "spoofer_error_m", "p_s", "flagged_count", "false_positive_count",
           "spoofed_count", "entries", "sessions", "n_selected")
# fields that identify a record but never define a group
_NON_GROUP = {"seed"}


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


def _run_seed(cfg: CampaignConfig, seed: int) -> list[dict]:
    return PIPELINES[cfg.scenario](cfg, seed)


@dataclass
class RunResult:
    """Flat records (one per seed and sweep variant) plus wall time.

    Wall time stays out of the records so that exports are byte-identical
    across runs.
    """

    scenario: str
    records: list = field(default_factory=list)
    runtime_s: float = field(default=0.0, compare=False)

    @property
    def seeds(self) -> list[int]:
        return sorted({r["seed"] for r in self.records})

    def by_seed(self) -> dict[int, list[dict]]:
        out: dict = {}
        for r in self.records:
            out.setdefault(r["seed"], []).append(r)
        return out

    @property
    def fields(self) -> list[str]:
        return list(self.records[0]) if self.records else ["seed"]

    def group_keys(self) -> list[str]:
        return [f for f in self.fields if f not in _NON_GROUP and f not in METRICS]

    def aggregates(self) -> list[dict]:
        """Mean, median, 90th percentile and 95% CI half-width per group and metric."""
        keys = self.group_keys()
        groups: dict = {}
        for r in self.records:
            groups.setdefault(tuple(r[k] for k in keys), []).append(r)
        out = []
        for gk in sorted(groups, key=lambda t: tuple((isinstance(x, str), x) for x in t)):
            rows = groups[gk]
            agg = dict(zip(keys, gk))
            agg["count"] = len(rows)
            for m in METRICS:
                if m not in rows[0]:
                    continue
                v = np.array([r[m] for r in rows], dtype=float)
                v = v[np.isfinite(v)]
                stem = m[:-2] if m.endswith("_m") else m
                unit = "_m" if m.endswith("_m") else ""
                if v.size == 0:
                    mean = med = p90 = ci = math.nan
                else:
                    mean, med, p90 = float(v.mean()), float(np.median(v)), float(np.percentile(v, 90))
                    ci = float(1.96 * v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
                agg[f"mean_{stem}{unit}"] = mean
                agg[f"median_{stem}{unit}"] = med
                agg[f"p90_{stem}{unit}"] = p90
                agg[f"ci95_{stem}{unit}"] = ci
                agg[f"n_valid_{stem}"] = int(v.size)
            out.append(agg)
        return out

    def mean_of(self, metric: str = "victim_error_m", **where) -> float:
        v = [r[metric] for r in self.records if all(r.get(k) == w for k, w in where.items())]
        v = np.array(v, dtype=float)
        v = v[np.isfinite(v)]
        return float(v.mean()) if v.size else math.nan

    def median_of(self, metric: str, **where) -> float:
        v = np.array([r[metric] for r in self.records if all(r.get(k) == w for k, w in where.items())],
                     dtype=float)
        v = v[np.isfinite(v)]
        return float(np.median(v)) if v.size else math.nan


def run_campaign(config: CampaignConfig, workers: int | None = None) -> RunResult:
    """Run every seed of a campaign; records come back in seed order."""
    config.validate()
    seeds = [config.base_seed + i for i in range(config.seeds)]
    workers = worker_count() if workers is None else workers
    fn = partial(_run_seed, config)
    t0 = time.perf_counter()
    if workers <= 1 or len(seeds) == 1:
        chunks = [fn(s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(fn, seeds, chunksize=max(1, len(seeds) // (4 * workers))))
    return RunResult(config.scenario, [r for c in chunks for r in c], time.perf_counter() - t0)


# ---- export --------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_rows(rows, fieldnames, path, fmt: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(fieldnames)
                for r in rows:
                    w.writerow([_fmt(r[k]) for k in fieldnames])
        elif fmt == "json":
            with open(path, "w") as fh:
                json.dump({"fields": list(fieldnames), "records": [dict(r) for r in rows]}, fh,
                          indent=1, allow_nan=True)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def export(result: RunResult, path, fmt: str = "csv") -> Path:
    """Per-seed records, one row each."""
    return write_rows(result.records, result.fields, path, fmt)


def export_summary(result: RunResult, path, fmt: str = "csv") -> Path:
    aggs = _summary_rows(result)
    fields = list(aggs[0]) if aggs else result.group_keys()
    return write_rows(aggs, fields, path, fmt)


def _summary_rows(result: RunResult) -> list[dict]:
    aggs = result.aggregates()
    if result.scenario == "node_selection":
        # plot schema: one row per (mode, N); ROF rows are labelled N = "rof"
        rows = []
        for a in aggs:
            if a.get("weighted") or a.get("los_offset", 0.0) != 0.0:
                continue
            n = a["n"] if a["policy"] == "fixed" else a["policy"]
            rows.append({"mode": a["mode"], "N": n, "mean_error_m": a["mean_victim_error_m"],
                         "ci95_m": a["ci95_victim_error_m"]})
        if rows:
            return rows
    return aggs


def import_records(path) -> RunResult:
    """Inverse of :func:`export` for either format."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        doc = json.loads(text)
        records = doc["records"]
    else:
        rows = list(csv.reader(text.splitlines()))
        header, body = rows[0], rows[1:]
        records = [{k: _parse(v) for k, v in zip(header, row)} for row in body]
    return RunResult(_scenario_of(path), records)


def _scenario_of(path: Path) -> str:
    stem = path.stem
    for suffix in ("_records", "_summary"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem
