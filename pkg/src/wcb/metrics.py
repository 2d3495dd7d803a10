"""Threshold calibration, paired policy comparison, and file outputs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .report import RoundReport, iqr, median
from .sim import (
    METRICS,
    POLICIES,
    ExperimentBundle,
    ReplicationResult,
    SimulationConfig,
    run_experiment,
    summarize,
)


@dataclass(frozen=True)
class Calibration:
    threshold: float
    median: float
    iqr: float
    pool_size: int


def threshold_from_scores(scores: Sequence[float], offset: float) -> Calibration:
    if offset < 0:
        raise ValueError("offset must be >= 0")
    if len(scores) == 0:
        raise ValueError("no satisfaction scores to calibrate from")
    med = median(scores)
    return Calibration(threshold=med - offset, median=med, iqr=iqr(scores), pool_size=len(scores))


def calibrate_threshold(config: SimulationConfig, offset: float = 0.05) -> Calibration:
    """Run the WCB policy with retention decisions off and place the threshold
    ``offset`` below the pooled median satisfaction."""
    if offset < 0:
        raise ValueError("offset must be >= 0")
    probe = config.replace(policy="vrave", retention_enabled=False)
    bundle = run_experiment(probe, collect_scores=True)
    pool = [s for rep in bundle.replications for rnd in rep.scores for s in rnd]
    return threshold_from_scores(pool, offset)


def _ratio(a: float | None, b: float | None) -> float | None:
    if a is None or b is None or b == 0:
        return None
    return a / b


def pairwise(a: Mapping[str, Any], b: Mapping[str, Any]) -> dict[str, float | None]:
    """Compare aggregate ``a`` against ``b`` (both as produced by ``summarize``)."""
    sat = _ratio(a["satisfaction"]["mean"], b["satisfaction"]["mean"])
    rem = _ratio(a["avg_remuneration"]["mean"], b["avg_remuneration"]["mean"])
    if a["satisfaction"]["n"] == 0 or b["satisfaction"]["n"] == 0:
        sat = None
    return {
        "satisfaction_ratio": sat,
        "remuneration_ratio": rem,
        "remuneration_overhead_pct": None if rem is None else (rem - 1.0) * 100.0,
        "retained_ratio": _ratio(a["retained"]["mean"], b["retained"]["mean"]),
        "retained_delta": a["retained"]["mean"] - b["retained"]["mean"],
        "completed_ratio": _ratio(a["completed_tasks"]["mean"], b["completed_tasks"]["mean"]),
        "completed_delta": a["completed_tasks"]["mean"] - b["completed_tasks"]["mean"],
    }


def evaluate_bands(aggregates: Mapping[str, Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Check the qualitative orderings expected of the WCB policy against the baselines.

    Each entry carries the observed values so a failing band is reported, not hidden.
    """
    m = {p: {k: aggregates[p][k]["mean"] for k in METRICS} for p in POLICIES}
    ret = {p: m[p]["retained"] for p in POLICIES}
    comp = {p: m[p]["completed_tasks"] for p in POLICIES}
    sat = {p: m[p]["satisfaction"] for p in POLICIES}
    rem_v, rem_t = m["vrave"]["avg_remuneration"], m["training"]["avg_remuneration"]
    bands = []
    bands.append({
        "band": "retention ordering vrave > training > increasing > fixed",
        "passed": ret["vrave"] > ret["training"] > ret["increasing"] > ret["fixed"],
        "observed": ret,
    })
    sat_ratios = {p: _ratio(sat["vrave"], sat[p]) for p in ("fixed", "training", "increasing")}
    bands.append({
        "band": "satisfaction vrave >= 1.2x each baseline",
        "passed": all(r is not None and r >= 1.2 for r in sat_ratios.values()),
        "observed": sat_ratios,
    })
    hi, lo = max(comp["vrave"], comp["training"]), min(comp["vrave"], comp["training"])
    close = hi == 0 or (hi - lo) / hi <= 0.25
    bands.append({
        "band": "completed: vrave~training within 25%, both > increasing > fixed",
        "passed": close
        and min(comp["vrave"], comp["training"]) > comp["increasing"] > comp["fixed"],
        "observed": comp,
    })
    overhead = None if rem_t == 0 else (rem_v / rem_t - 1.0) * 100.0
    bands.append({
        "band": "avg remuneration: vrave exceeds training by 0-35%",
        "passed": overhead is not None and 0.0 < overhead <= 35.0,
        "observed": {"vrave": rem_v, "training": rem_t, "overhead_pct": overhead},
    })
    return bands


@dataclass
class Comparison:
    config: SimulationConfig
    bundles: dict[str, ExperimentBundle]
    aggregates: dict[str, dict[str, Any]] = field(default_factory=dict)
    ratios: dict[str, dict[str, float | None]] = field(default_factory=dict)
    bands: list[dict[str, Any]] = field(default_factory=list)


def compare_policies(config: SimulationConfig) -> Comparison:
    """Run every policy on identical seeds (and so identical arrival streams)."""
    bundles = {p: run_experiment(config.replace(policy=p)) for p in POLICIES}
    aggregates = {p: b.summary() for p, b in bundles.items()}
    ratios = {
        f"vrave_vs_{p}": pairwise(aggregates["vrave"], aggregates[p]) for p in POLICIES if p != "vrave"
    }
    return Comparison(config, bundles, aggregates, ratios, evaluate_bands(aggregates))


# --- outputs -----------------------------------------------------------------


def _config_line(config: Mapping[str, Any]) -> str:
    return "# config=" + json.dumps(config, sort_keys=True) + "\n"


def effective_config(bundle: ExperimentBundle) -> dict[str, Any]:
    d = bundle.config.to_dict()
    d["baseline_base_effective"] = bundle.baseline_base
    d["baseline_slope_effective"] = bundle.baseline_slope
    return d


def rounds_csv_text(reports: Sequence[RoundReport], config: Mapping[str, Any]) -> str:
    buf = io.StringIO()
    buf.write(_config_line(config))
    writer = csv.DictWriter(buf, fieldnames=RoundReport.columns(), lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.to_row())
    return buf.getvalue()


def read_rounds_csv(path: str | Path) -> list[RoundReport]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return [RoundReport.from_row(row) for row in csv.DictReader(lines)]


def _bundle_summary(bundle: ExperimentBundle) -> dict[str, Any]:
    reps = bundle.replications
    return {
        "replications": len(reps),
        "seeds": [r.seed for r in reps],
        "max_abs_conservation_residual": max((abs(r.conservation_residual) for r in reps), default=0.0),
        "aggregates": bundle.summary(),
    }


def figures_rows(bundles: Mapping[str, ExperimentBundle]) -> list[tuple]:
    rows = []
    for policy, bundle in bundles.items():
        for rep in bundle.replications:
            for r in rep.reports:
                for metric, column in METRICS.items():
                    value = getattr(r, column)
                    rows.append((policy, rep.index, r.round, metric, "" if value is None else repr(float(value))))
    return rows


def emit_outputs(
    bundles: Mapping[str, ExperimentBundle] | ExperimentBundle,
    out_dir: str | Path,
    *,
    comparison: Comparison | None = None,
) -> list[Path]:
    """Write per-replication round CSVs, ``figures.csv`` and ``summary.json``."""
    if isinstance(bundles, ExperimentBundle):
        bundles = {bundles.policy: bundles}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    configs = {p: effective_config(b) for p, b in bundles.items()}
    for policy, bundle in bundles.items():
        for rep in bundle.replications:
            path = out / f"rounds_{policy}_{rep.index}.csv"
            path.write_text(rounds_csv_text(rep.reports, configs[policy]), encoding="utf-8")
            written.append(path)

    shared = next(iter(configs.values()), {})
    buf = io.StringIO()
    buf.write(_config_line(shared))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["policy", "replication", "round", "metric", "value"])
    writer.writerows(figures_rows(bundles))
    fig = out / "figures.csv"
    fig.write_text(buf.getvalue(), encoding="utf-8")
    written.append(fig)

    summary: dict[str, Any] = {
        "config": shared,
        "policy_configs": configs,
        "policies": {p: _bundle_summary(b) for p, b in bundles.items()},
    }
    if comparison is not None:
        summary["ratios"] = comparison.ratios
        summary["bands"] = comparison.bands
    path = out / "summary.json"
    path.write_text(json.dumps(_finite(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    return written


def _finite(obj):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def recompute_aggregates(paths: Sequence[str | Path]) -> dict[str, Any]:
    """Aggregates rebuilt from rounds CSVs alone, for cross-checking ``summary.json``."""
    reps = [ReplicationResult(i, 0, read_rounds_csv(p), 0.0) for i, p in enumerate(paths)]
    return summarize(reps)
