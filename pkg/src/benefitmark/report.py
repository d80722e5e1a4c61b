"""Report assembly and serialization.

Every float is written with 17 significant digits so that reruns can be
compared byte for byte; non-finite values become ``null``.
"""
from __future__ import annotations

import json
import math
import re
from itertools import combinations

import numpy as np
import scipy

from . import __version__
from .bootstrap import BootstrapResult, bootstrap_se, percentile_interval, pointwise_roc_band
from .data import AnalysisConfig, TrialDataset
from .kernels import BACKEND
from .metrics import FPR_GRID, roc_on_grid
from .pipeline import AnalysisResult

ROC_HEADER = ("fpr", "tpr", "lower", "upper")


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        return "null"
    text = format(value, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with fixed float formatting and insertion-ordered keys."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def setting_label(parameter: str, value: float) -> str:
    return f"{parameter}{format_float(value)}"


def roc_filename(marker: str, approach: str, parameter: str, value: float) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]", "_", marker)
    return f"roc_{slug}_{approach}_{setting_label(parameter, value)}.csv"


def _interval_stats(samples, level: float) -> dict:
    if len(samples) < 2:
        return {}
    lo, hi = percentile_interval(samples, level)
    return {"se": bootstrap_se(samples), "ci": [lo, hi]}


def build_report(data: TrialDataset, config: AnalysisConfig, result: AnalysisResult,
                 boot: BootstrapResult | None = None) -> dict:
    """Nested report dictionary; SE, CI and band fields appear only with >= 2 replicates."""
    have_boot = boot is not None and boot.replicates >= 2
    level = config.ci_level
    results = []
    grids = {}
    for s in result.settings:
        entry = {
            "marker": s.marker,
            "marker_kind": s.curve.marker_kind,
            "approach": s.approach,
            "parameter": s.parameter,
            "value": s.value,
            "auc": s.auc,
        }
        col = None
        if have_boot:
            col = boot.column(*s.key)
            stats = _interval_stats(boot.aucs[:, col], level)
            entry["auc_se"] = stats["se"]
            entry["auc_ci"] = stats["ci"]
        if s.curve.marker_kind == "binary":
            entry["tau"] = s.curve.tau
            entry["tpr"] = s.tpr
            entry["fpr"] = s.fpr
        else:
            entry["bandwidth"] = s.curve.bandwidth
            entry["fallback_points"] = s.curve.fallback_points
        entry["pi_z"] = {"z": s.curve.z, "pi": s.curve.pi_z}
        entry["roc"] = {"fpr": s.roc.fpr, "tpr": s.roc.tpr}
        band = {"fpr": FPR_GRID, "tpr": roc_on_grid(s.roc)}
        if have_boot:
            _, lower, upper = pointwise_roc_band(boot, s.marker, s.approach, s.value, level)
            band["lower"], band["upper"] = lower, upper
        grids[s.key] = band
        entry["roc_band"] = band
        entry["roc_csv"] = roc_filename(s.marker, s.approach, s.parameter, s.value)
        results.append(entry)

    differences = []
    by_key = {s.key: s for s in result.settings}
    for a, b in combinations(config.marker_columns, 2):
        for s in result.settings:
            if s.marker != a:
                continue
            other = by_key[(b, s.approach, s.value)]
            row = {"marker_a": a, "marker_b": b, "approach": s.approach,
                   "parameter": s.parameter, "value": s.value,
                   "auc_difference": s.auc - other.auc}
            if have_boot:
                diffs = boot.aucs[:, boot.column(*s.key)] - boot.aucs[:, boot.column(*other.key)]
                stats = _interval_stats(diffs, level)
                row["se"], row["ci"] = stats["se"], stats["ci"]
            differences.append(row)

    table = []
    for s in result.settings:
        if s.marker != config.marker_columns[0]:
            continue
        row = {"approach": s.approach, "parameter": s.parameter, "value": s.value, "markers": {}}
        for m in config.marker_columns:
            e = next(r for r in results if (r["marker"], r["approach"], r["value"]) ==
                     (m, s.approach, s.value))
            row["markers"][m] = {"auc": e["auc"], "se": e.get("auc_se")}
        row["differences"] = [
            {"markers": [d["marker_a"], d["marker_b"]], "estimate": d["auc_difference"],
             "se": d.get("se")}
            for d in differences if (d["approach"], d["value"]) == (s.approach, s.value)]
        table.append(row)

    meta = {
        "package": "benefitmark",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": BACKEND,
        "seed": config.seed,
        "config": config.to_dict(),
        "data": {"n": data.n, "n_control": data.n0, "n_treated": data.n1,
                 "outcome_kind": data.outcome_kind,
                 "marker_kinds": {m: data.marker_kinds[m] for m in config.marker_columns}},
        "bootstrap": _bootstrap_meta(boot, result),
    }
    return {"metadata": meta, "models": result.models, "results": results,
            "differences": differences, "table": table}


def _bootstrap_meta(boot: BootstrapResult | None, result: AnalysisResult) -> dict:
    if boot is None:
        return {"requested": 0, "completed": 0, "failures": []}
    summary = []
    for s in result.settings:
        if s.curve.marker_kind != "continuous" or boot.replicates == 0:
            continue
        bw = boot.bandwidths[:, boot.column(*s.key)]
        values, counts = np.unique(bw, return_counts=True)
        summary.append({"marker": s.marker, "approach": s.approach, "value": s.value,
                        "point_estimate": s.curve.bandwidth,
                        "replicate_bandwidths": values, "counts": counts})
    return {
        "requested": boot.requested,
        "completed": boot.replicates,
        "failures": [{"replicate": r, "reason": why} for r, why in boot.failures],
        "bandwidth_summary": summary,
    }


def roc_csv_text(band: dict) -> str:
    """Plot-ready ROC on the fixed fpr grid; band columns are empty without a bootstrap."""
    lines = [",".join(ROC_HEADER)]
    lower = band.get("lower")
    upper = band.get("upper")
    for g in range(len(band["fpr"])):
        cells = [format_float(band["fpr"][g]), format_float(band["tpr"][g])]
        cells += ["" if lower is None else format_float(lower[g]),
                  "" if upper is None else format_float(upper[g])]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
