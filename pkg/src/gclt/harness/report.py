"""Deterministic JSON/CSV serialization of experiment reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

from .experiments import MomentReport, Row

CSV_COLUMNS = ("experiment", "quantity", "empirical", "se", "theoretical", "zscore", "verdict")


def _num(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def _jsonable(x):
    """Non-finite floats become strings so the output is strict JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _from_json(x):
    if isinstance(x, str) and x in ("nan", "inf", "-inf"):
        return float(x)
    return x


def report_to_dict(report: MomentReport) -> dict:
    out = {"rows": [dataclasses.asdict(r) for r in report.rows],
           "extras": report.extras}
    if report.config is not None:
        out["config"] = report.config
        out["seed"] = report.config.get("seed")
    return _jsonable(out)


def report_from_dict(data: dict) -> MomentReport:
    rows = [Row(**{k: _from_json(v) for k, v in r.items()}) for r in data.get("rows", [])]
    return MomentReport(rows, data.get("config"), data.get("extras", {}))


def render_csv(report: MomentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    if report.config is not None:
        for key in sorted(report.config):
            w.writerow(["config", f"{key}={report.config[key]}", "", "", "", "", ""])
    for r in report.rows:
        w.writerow([r.experiment, r.quantity, _num(r.empirical), _num(r.se),
                    _num(r.theoretical), _num(r.zscore), r.verdict])
    return buf.getvalue()


def render_json(report: MomentReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def emit_report(report: MomentReport, path, fmt: str = "json") -> None:
    fmt = fmt.lower()
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    text = render_json(report) if fmt == "json" else render_csv(report)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
