"""Consolidated reporting over norm estimates and certificates.

Takes any mix of files produced by the command-line front end (run reports
with norm estimates, certificate files), merges entries that refer to the
same input set (matched by content digest), and emits a delimited table plus
plot-data JSON with stable key order.  Figure rendering is optional and
writes PNG files next to the tables; the tables themselves never depend on
it.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

from .errors import ValidationError


def classify_payload(obj: dict) -> str:
    """What a loaded JSON object is: certificate, run report, set, unknown."""
    if not isinstance(obj, dict):
        return "unknown"
    if "certified_bound" in obj and "labels" in obj:
        return "certificate"
    if "command" in obj and "outputs" in obj:
        return "run_report"
    if "dim" in obj and "points" in obj:
        return "set"
    return "unknown"


@dataclass
class ReportRow:
    name: str
    digest: str | None = None
    points: int | None = None
    l1_value: float | None = None
    l1_error: float | None = None
    certified: float | None = None
    measured_re: float | None = None
    measured_budget: float | None = None
    sources: list[str] = field(default_factory=list)

    def merge_from(self, other: "ReportRow") -> None:
        for name in (
            "points",
            "l1_value",
            "l1_error",
            "certified",
            "measured_re",
            "measured_budget",
        ):
            if getattr(self, name) is None:
                setattr(self, name, getattr(other, name))
        self.sources.extend(other.sources)


def _row_from_certificate(name: str, obj: dict) -> ReportRow:
    ctx = obj.get("context") or {}
    pts = (obj.get("target") or {}).get("points")
    n = len(pts) if pts else len(obj.get("labels", []))
    meas = obj.get("measured") or {}
    return ReportRow(
        name=name,
        digest=ctx.get("input_digest"),
        points=n,
        certified=obj.get("certified_bound"),
        measured_re=meas.get("re"),
        measured_budget=meas.get("error_bound"),
        sources=[name],
    )


def _row_from_run_report(name: str, obj: dict) -> ReportRow:
    out = obj.get("outputs") or {}
    row = ReportRow(name=name, digest=obj.get("input_digest"), sources=[name])
    if out.get("kind") == "norm":
        row.points = out.get("points")
        if out.get("p") == "1":
            row.l1_value = out.get("value")
            row.l1_error = out.get("error_bound")
    return row


def load_rows(paths) -> list[ReportRow]:
    rows = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
        kind = classify_payload(obj)
        name = os.path.splitext(os.path.basename(path))[0]
        if kind == "certificate":
            rows.append(_row_from_certificate(name, obj))
        elif kind == "run_report":
            rows.append(_row_from_run_report(name, obj))
        elif kind == "set":
            rows.append(ReportRow(name=name, points=len(obj["points"]), sources=[name]))
        else:
            raise ValidationError(f"{path}: unrecognized payload")
    return rows


def merge_rows(rows) -> list[ReportRow]:
    """Group by input digest where present; undigested rows stand alone."""
    by_key: dict[str, ReportRow] = {}
    order: list[str] = []
    for row in rows:
        key = row.digest if row.digest else f"file:{row.name}"
        if key in by_key:
            by_key[key].merge_from(row)
        else:
            by_key[key] = row
            order.append(key)
    return [by_key[k] for k in order]


_COLUMNS = (
    "name",
    "points",
    "log_points",
    "l1_value",
    "l1_error_bound",
    "certified_bound",
    "measured_re",
    "measured_budget",
)


def _cells(row: ReportRow) -> dict:
    logp = math.log(row.points) if row.points else None
    return {
        "name": row.name,
        "points": row.points,
        "log_points": logp,
        "l1_value": row.l1_value,
        "l1_error_bound": row.l1_error,
        "certified_bound": row.certified,
        "measured_re": row.measured_re,
        "measured_budget": row.measured_budget,
    }


def write_report_csv(rows, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for row in rows:
            cells = _cells(row)
            w.writerow(
                ["" if cells[c] is None else repr(cells[c]) if isinstance(cells[c], float) else cells[c] for c in _COLUMNS]
            )


def write_report_json(rows, path: str) -> None:
    payload = {"rows": [_cells(r) | {"sources": sorted(r.sources)} for r in rows]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_figures(rows, out_prefix: str) -> list[str]:
    """Norm-vs-size and certified-vs-measured figures as PNG files.

    Returns the paths written; figures with no data points are skipped.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written: list[str] = []

    sized = [r for r in rows if r.points and (r.l1_value is not None or r.certified is not None)]
    if sized:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        xs = [math.log(r.points) for r in sized if r.l1_value is not None]
        ys = [r.l1_value for r in sized if r.l1_value is not None]
        es = [r.l1_error or 0.0 for r in sized if r.l1_value is not None]
        if xs:
            ax.errorbar(xs, ys, yerr=es, fmt="o", label="measured L1", color="#1f5fa8")
        xc = [math.log(r.points) for r in sized if r.certified is not None]
        yc = [r.certified for r in sized if r.certified is not None]
        if xc:
            ax.plot(xc, yc, "s", label="certified bound", color="#b3541e")
        ax.set_xlabel("log |A|")
        ax.set_ylabel("L1 norm")
        ax.legend()
        fig.tight_layout()
        path = f"{out_prefix}_norms.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    paired = [
        r for r in rows if r.certified is not None and r.measured_re is not None
    ]
    if paired:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        xs = [r.certified for r in paired]
        ys = [r.measured_re for r in paired]
        ax.scatter(xs, ys, color="#1f5fa8")
        lo = min(xs + ys + [0.0])
        hi = max(xs + ys) * 1.05 + 1e-9
        ax.plot([lo, hi], [lo, hi], "--", color="#888888", linewidth=1)
        ax.set_xlabel("certified bound")
        ax.set_ylabel("measured pairing (real part)")
        fig.tight_layout()
        path = f"{out_prefix}_certified.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written


def build_report(paths, out_prefix: str, plot: bool = True) -> dict:
    """Load, merge, and write the consolidated table; returns a summary."""
    rows = merge_rows(load_rows(paths))
    csv_path = f"{out_prefix}.csv"
    json_path = f"{out_prefix}.json"
    write_report_csv(rows, csv_path)
    write_report_json(rows, json_path)
    figures = render_figures(rows, out_prefix) if plot and rows else []
    return {
        "rows": len(rows),
        "csv": csv_path,
        "json": json_path,
        "figures": figures,
    }
