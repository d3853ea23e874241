"""Per-axis sweep tables: one column per candidate value, one SER row per method and system.

Markdown cells carry 4 decimals; CSV cells carry the full ``repr`` of each score,
so a CSV parses back to the exact trial scores.
"""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .grid import AXIS_LABELS, render_value
from .tuner import ALTERNATING, MARGINAL, TuneReport

METHOD_LABELS = {MARGINAL: "method 1", ALTERNATING: "method 2"}
SYSTEM_LABELS = {"fso": "FSO", "fiber": "Fiber", "awgn": "AWGN"}
CSV_FIELDS = ["system", "method", "step", "axis", "value", "score"]


def system_label(name: str) -> str:
    return SYSTEM_LABELS.get(name, name)


def _require_sweeps(report: TuneReport) -> None:
    if report.method not in METHOD_LABELS:
        raise ValueError(f"{report.method} reports have no per-axis sweeps to tabulate")


def sweep_scores(report: TuneReport, step: int) -> dict[str, list[float]]:
    """Score per candidate value, per axis, for one step."""
    _require_sweeps(report)
    out = {}
    for axis in report.grid.axes:
        trials = report.sweep(step, axis.id)
        if len(trials) != len(axis):
            raise ValueError(f"step {step} has {len(trials)} trials on {axis.id}, expected {len(axis)}")
        out[axis.id] = [t.score for t in trials]
    return out


def _fmt(score: float) -> str:
    return f"{score:.4f}"


def _row(cells: Sequence[str], width: int) -> str:
    cells = list(cells) + [""] * (width - len(cells))
    return "| " + " | ".join(cells) + " |"


def _score_cells(scores: Sequence[float]) -> list[str]:
    best = min(scores)
    return [f"**{_fmt(s)}**" if s == best else _fmt(s) for s in scores]


def _markdown(blocks, width: int) -> str:
    lines = [_row(["Hyperparameter"] + [str(i + 1) for i in range(width - 1)], width)]
    lines.append("|" + "---|" * width)
    for label, values, rows in blocks:
        lines.append(_row([f"**{label}**"] + values, width))
        for row_label, scores in rows:
            lines.append(_row([row_label] + _score_cells(scores), width))
    return "\n".join(lines) + "\n"


def summary_markdown(report: TuneReport, system: str) -> str:
    """One table per step; the best cell of each row is bolded."""
    _require_sweeps(report)
    width = 1 + max(len(a) for a in report.grid.axes)
    label = f"{METHOD_LABELS[report.method]}-{system_label(system)} SER"
    parts = [f"# {system_label(system)} / {report.method}\n"]
    for step in range(1, report.steps + 1):
        scores = sweep_scores(report, step)
        blocks = [
            (AXIS_LABELS.get(a.id, a.id), [render_value(v) for v in a.values], [(label, scores[a.id])])
            for a in report.grid.axes
        ]
        best = [b for b in report.best_per_step if b[0] == step]
        parts.append(f"\n## Step {step}\n\n")
        parts.append(_markdown(blocks, width))
        if best:
            parts.append(f"\nSelected: `{best[0][1].key}` with SER {_fmt(best[0][2])}\n")
    parts.append(
        f"\nRequests: {report.total_requests}, distinct evaluations: {report.distinct_evaluations}, "
        f"converged at step: {report.converged_at_step}\n"
    )
    return "".join(parts)


def summary_csv(report: TuneReport, system: str) -> str:
    _require_sweeps(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for step in range(1, report.steps + 1):
        for axis in report.grid.axes:
            for v, t in zip(axis.values, report.sweep(step, axis.id)):
                w.writerow([system, report.method, step, axis.id, render_value(v), repr(t.score)])
    return buf.getvalue()


def read_summary_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        r["step"] = int(r["step"])
        r["score"] = float(r["score"])
    return rows


def render_table7(runs: Sequence[tuple[str, TuneReport]], step: int = 1) -> tuple[str, str]:
    """Interleave method 1 / method 2 rows per system under each axis.

    ``runs`` is a sequence of ``(system name, report)``; all reports must share a grid.
    Returns ``(markdown, csv)``.
    """
    if not runs:
        raise ValueError("no reports to render")
    grid = runs[0][1].grid
    for name, rep in runs:
        _require_sweeps(rep)
        if rep.grid != grid:
            raise ValueError(f"report for {name}/{rep.method} was run on a different grid")
    systems = list(dict.fromkeys(name for name, _ in runs))
    order = {MARGINAL: 0, ALTERNATING: 1}
    ordered = sorted(runs, key=lambda r: (systems.index(r[0]), order[r[1].method]))
    scores = [(name, rep, sweep_scores(rep, step)) for name, rep in ordered]

    width = 1 + max(len(a) for a in grid.axes)
    blocks = []
    for axis in grid.axes:
        rows = [
            (f"{METHOD_LABELS[rep.method]}-{system_label(name)} SER", sc[axis.id]) for name, rep, sc in scores
        ]
        blocks.append((AXIS_LABELS.get(axis.id, axis.id), [render_value(v) for v in axis.values], rows))
    md = _markdown(blocks, width)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for axis in grid.axes:
        for name, rep, sc in scores:
            for v, s in zip(axis.values, sc[axis.id]):
                w.writerow([name, rep.method, step, axis.id, render_value(v), repr(s)])
    return md, buf.getvalue()
