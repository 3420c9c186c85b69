"""Human-readable, CSV and figure renderings of a pipeline or audit report."""

from __future__ import annotations

import csv
import io
from collections import Counter
from pathlib import Path

from .analyzers import LEGEND

SAFETY_COLUMNS = ("ptr_d", "ptr_*", "uLoC", "%Unsafe", "LoC")


def render_text(report: dict, name: str = "project") -> str:
    lines = []
    if "mode" in report:
        lines.append(f"mode: {report['mode']}")
    if "build" in report:
        b = report["build"]
        lines.append(f"build: {'ok' if b['ok'] else 'FAILED'} ({b['errors']} errors, {b['warnings']} warnings)")
    if "tests" in report:
        t = report["tests"]
        lines.append(f"tests: {'ok' if t['ok'] else 'FAILED'} ({t['passed']} passed, {t['failed']} failed)")
    s = report.get("safety")
    if s:
        header = f"{'Project':<16}" + "".join(f"{c:>9}" for c in SAFETY_COLUMNS)
        row = f"{name[:15]:<16}" + "".join(
            f"{s[c]:>9.1f}" if c == "%Unsafe" else f"{s[c]:>9}" for c in SAFETY_COLUMNS)
        lines += ["", header, "-" * len(header), row]
    c = report.get("coverage")
    if c:
        lines += [
            "",
            f"functional coverage: {c['functional_pct']:.1f}% "
            f"({c['functions_implemented']} implemented, {c['functions_stub']} stub, "
            f"{c['functions_missing']} missing, {c['functions_null']} null of {c['functions_total']})",
            f"test coverage:       {c['test_pct']:.1f}% "
            f"({c['rust_tests_present']} of {c['c_tests_total']} C tests present and executable)",
        ]
    units = report.get("units")
    if units:
        counts = Counter(u["phase"] for u in units)
        lines += ["", "units: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))]
        for u in units:
            if u["phase"] == "failed":
                lines.append(f"  unit {u['unit_id']} failed: {u['last_error']}")
    if s:
        lines += ["", LEGEND]
    return "\n".join(lines)


def render_csv(report: dict, name: str = "project") -> str:
    """One row of metrics, comma separated, header first."""
    cols = ["project"]
    vals: list = [name]
    for c in SAFETY_COLUMNS:
        if "safety" in report:
            cols.append(c)
            vals.append(report["safety"][c])
    cov = report.get("coverage")
    if cov:
        cols += ["functional_pct", "test_pct"]
        vals += [cov["functional_pct"], cov["test_pct"]]
    for section in ("build", "tests"):
        if section in report:
            cols.append(f"{section}_ok")
            vals.append(int(bool(report[section]["ok"])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerow(vals)
    return buf.getvalue()


def write_figures(report: dict, out_dir, name: str = "project") -> list[Path]:
    """Write PNG charts plus the CSV row into ``out_dir``; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out / "metrics.csv"
    csv_path.write_text(render_csv(report, name), encoding="utf-8")
    written.append(csv_path)

    s = report.get("safety")
    if s:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        keys = ["ptr_d", "ptr_*", "uLoC"]
        ax.bar(keys, [s[k] for k in keys], color="#4c72b0")
        ax.set_title(f"{name}: unsafe usage ({s['%Unsafe']:.1f}% of {s['LoC']} LoC)")
        ax.set_ylabel("count")
        fig.tight_layout()
        p = out / "safety.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        written.append(p)

    c = report.get("coverage")
    if c:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar(["functional", "test"], [c["functional_pct"], c["test_pct"]], color=["#55a868", "#c44e52"])
        ax.set_ylim(0, 100)
        ax.set_ylabel("%")
        ax.set_title(f"{name}: coverage")
        fig.tight_layout()
        p = out / "coverage.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        written.append(p)

    units = report.get("units")
    if units:
        counts = Counter(u["phase"] for u in units)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        phases = sorted(counts)
        ax.bar(phases, [counts[p] for p in phases], color="#8172b2")
        ax.set_ylabel("units")
        ax.set_title(f"{name}: translation unit outcomes")
        fig.tight_layout()
        p = out / "units.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        written.append(p)
    return written
