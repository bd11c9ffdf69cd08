"""Deterministic report files: ``report.json``, ``sessions.csv``, ``summary.csv``."""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict
from pathlib import Path

from .harness import SESSION_COLUMNS, SUMMARY_COLUMNS, Metrics

# Published MultiWOZ 2.2 figures; only comparable when that corpus is supplied.
REFERENCE = {
    "graph_stats": {"nodes": 43, "arcs": 34, "arcs_by_kind": {"TypeA": 25, "TypeB": 4, "TypeC": 5},
               "conjunctive_fraction": 0.735, "mean_fan_in": 2.21, "max_fan_in": 5, "min_rate": 0.761},
    "k_distribution": {"histogram": {"1": 612, "2": 287, "3": 81, "4+": 20}, "mean_K": 1.31},
    "session_cost": {"no_cache": 13.7, "cosine": 7.2, "cas_only": 2.1, "cas_pab@1.0": 1.31, "cas_pab@0.75": 1.38,
               "cas_pab@0.5": 1.52, "cas_pab@0.25": 1.89, "cosine_unsafe_hits": 143},
    "coverage_sweep": {"1.0": {"hit_rate": 0.884, "tier1": 0.831, "tier2": 0.053},
               "0.75": {"hit_rate": 0.792, "tier1": 0.738, "tier2": 0.054},
               "0.5": {"hit_rate": 0.612, "tier1": 0.559, "tier2": 0.053},
               "0.25": {"hit_rate": 0.361, "tier1": 0.309, "tier2": 0.052}},
}

_DIGITS = 6


def _clean(x):
    if isinstance(x, float):
        return round(x, _DIGITS)
    if isinstance(x, Mapping):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def json_dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def csv_text(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _clean(v) for k, v in r.items()})
    return buf.getvalue()


def k_table(hist: Mapping[int, int]) -> dict:
    total = sum(hist.values())
    rows, cum = [], 0
    for k in sorted(hist):
        cum += hist[k]
        rows.append({"K": k, "count": hist[k], "cum_pct": 100.0 * cum / total if total else 0.0})
    mean = sum(k * c for k, c in hist.items()) / total if total else 0.0
    return {"rows": rows, "mean_K": mean, "sessions": total}


def metrics_sections(metrics: Metrics) -> dict:
    session_cost = [
        {"method": s.method, "coverage": s.coverage, "mean_rag": s.mean_rag, "mean_cost": s.mean_cost,
         "unsafe_hits": s.unsafe_hits, "unsafe_pct": s.unsafe_pct, "blocked": s.blocked}
        for s in metrics.summaries
    ]
    coverage_sweep = [
        {"coverage": s.coverage, "hit_rate": s.hit_rate, "tier1": s.tier1_rate, "tier2": s.tier2_rate,
         "rag": s.rag_rate}
        for s in metrics.summaries if s.method == "cas_pab"
    ]
    return {
        "k_distribution": k_table(metrics.k_histogram),
        "session_cost": session_cost,
        "coverage_sweep": coverage_sweep,
        "summary": [asdict(s) for s in metrics.summaries],
    }


def emit_report(
    out_dir: str | Path,
    metrics: Metrics | None = None,
    *,
    config: Mapping | None = None,
    extra: Mapping | None = None,
) -> list[Path]:
    """Write the report files; returns their paths in a fixed order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc: dict = {"reference": REFERENCE}
    if config is not None:
        doc["config"] = dict(config)
    if metrics is not None:
        doc["config"] = {**doc.get("config", {}), "experiment": metrics.config.to_dict()}
        doc["graph_version"] = metrics.graph_version
        doc.update(metrics_sections(metrics))
    if extra:
        doc.update(extra)
    sessions = [asdict(r) for r in metrics.sessions] if metrics else []
    summary = [asdict(s) for s in metrics.summaries] if metrics else []
    files = [
        (out / "report.json", json_dump(doc)),
        (out / "sessions.csv", csv_text(SESSION_COLUMNS, sessions)),
        (out / "summary.csv", csv_text(SUMMARY_COLUMNS, summary)),
    ]
    for path, text in files:
        path.write_text(text, encoding="utf-8")
    return [p for p, _ in files]


def format_summary(doc: Mapping) -> str:
    """Plain-text rendering of a ``report.json`` document."""
    lines = []
    if "graph_stats" in doc:
        lines.append("Extraction")
        for k, v in doc["graph_stats"].items():
            lines.append(f"  {k}: {v}")
    if "k_distribution" in doc:
        t = doc["k_distribution"]
        lines.append(f"K distribution ({t['sessions']} sessions, mean {t['mean_K']:.3f})")
        for r in t["rows"]:
            lines.append(f"  K={r['K']}: {r['count']} ({r['cum_pct']:.1f}% cumulative)")
    if "session_cost" in doc:
        lines.append("Session cost")
        for r in doc["session_cost"]:
            lines.append(f"  {r['method']:<9} p={r['coverage']:<5} rag={r['mean_rag']:.3f} "
                         f"cost={r['mean_cost']:.1f} unsafe={r['unsafe_hits']} ({r['unsafe_pct']:.1f}%)")
    if "coverage_sweep" in doc:
        lines.append("Coverage sweep")
        for r in doc["coverage_sweep"]:
            lines.append(f"  p={r['coverage']:<5} hit={100 * r['hit_rate']:.1f}% tier1={100 * r['tier1']:.1f}% "
                         f"tier2={100 * r['tier2']:.1f}% rag={100 * r['rag']:.1f}%")
    if "omission" in doc:
        lines.append("Omission")
        for r in doc["omission"]:
            lines.append(f"  r={r['r']:<5} safety={r['safety_violation_rate']:.4f} "
                         f"false_reject={r['false_rejection_rate']:.4f} recall={r['pab_recall']:.4f} "
                         f"and={r['and_violation_rate']:.4f}")
    return "\n".join(lines) + "\n"
