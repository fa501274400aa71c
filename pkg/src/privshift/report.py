"""Report emission: delimited rows plus aggregate block, and an SVG figure.

Both outputs are byte-deterministic for a fixed report: floats are written
with shortest round-trip repr, the SVG hash salt is pinned, and no timestamps
are embedded.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .common import DataError
from .harness import Report

ROW_HEADER = ("mechanism", "epsilon", "trial", "sentence_id",
              "id_reference", "id_transformed", "shift")
AGGREGATE_HEADER = ("mechanism", "epsilon", "mean_shift", "std_shift",
                    "mean_abs_shift", "count")

_SVG_HASHSALT = "privshift"


def _fmt(x: float) -> str:
    return repr(float(x))


def render_csv(report: Report) -> str:
    """Row section, aggregate block, optional baseline line, metadata echo."""
    if not report.rows:
        raise DataError("cannot emit an empty report")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_HEADER)
    for row in report.rows:
        writer.writerow(
            (
                row.mechanism,
                _fmt(row.epsilon),
                row.trial,
                row.sentence_id,
                _fmt(row.id_reference),
                _fmt(row.id_transformed),
                _fmt(row.shift),
            )
        )
    buf.write("\n# aggregate\n")
    writer.writerow(AGGREGATE_HEADER)
    for cell in report.cells:
        writer.writerow(
            (
                cell.mechanism,
                _fmt(cell.epsilon),
                _fmt(cell.mean_shift),
                _fmt(cell.std_shift),
                _fmt(cell.mean_abs_shift),
                cell.count,
            )
        )
    if report.baseline is not None:
        b = report.baseline
        buf.write("\n# baseline\n")
        writer.writerow(("baseline", _fmt(b.mean_shift), _fmt(b.std_shift),
                         b.pairs_used, b.pairs_skipped))
    if report.metadata:
        buf.write("\n# metadata\n")
        for key in sorted(report.metadata):
            buf.write(f"# {key}={report.metadata[key]}\n")
    return buf.getvalue()


def render_svg(report: Report) -> bytes:
    """Line plot of mean shift vs epsilon per mechanism.

    Exactly one horizontal baseline rule is drawn: the human-paraphrase
    baseline when present, otherwise the zero line.
    """
    if not report.cells:
        raise DataError("cannot plot an empty report")
    mechanisms = sorted({c.mechanism for c in report.cells})

    with plt.rc_context({"svg.hashsalt": _SVG_HASHSALT}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for mechanism in mechanisms:
            cells = sorted(
                (c for c in report.cells if c.mechanism == mechanism),
                key=lambda c: c.epsilon,
            )
            ax.plot(
                [c.epsilon for c in cells],
                [c.mean_shift for c in cells],
                marker="o",
                label=mechanism,
            )
        if report.baseline is not None:
            level = report.baseline.mean_shift
            label = "human paraphrase baseline"
        else:
            level = 0.0
            label = "zero shift"
        rule = ax.axhline(level, color="0.3", linestyle="--", linewidth=1.0, label=label)
        rule.set_gid("baseline")
        ax.set_xlabel("privacy budget epsilon")
        ax.set_ylabel("mean ID shift")
        ax.legend()
        fig.tight_layout()
        out = io.BytesIO()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out.getvalue()


def emit(report: Report, fmt: str, out_path: str | Path) -> Path:
    """Write the report in the named format; returns the written path."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        out_path.write_text(render_csv(report), encoding="utf-8")
    elif fmt == "svg-plot":
        out_path.write_bytes(render_svg(report))
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected csv or svg-plot")
    return out_path
