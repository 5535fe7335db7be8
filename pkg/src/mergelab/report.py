"""Deterministic CSV, Pareto-report and SVG emission for sweep results.

SVGs are hand-emitted on a fixed 800x600 canvas with linear [0, 1] axes
and 2-decimal coordinate formatting, so reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .merge_core import MergeMethod, MergeRecipe
from .pareto import ParetoResult
from .sweep import STATUS_OK, EvalPoint

__all__ = [
    "write_sweep_csv",
    "read_sweep_csv",
    "load_points",
    "write_pareto_report",
    "emit_tradeoff_svg",
    "emit_trajectory_svg",
]

CSV_COLUMNS = ("method", "weight", "instruction_score", "medical_avg", "status")

_CANVAS_W = 800
_CANVAS_H = 600
_MARGIN_LEFT = 70.0
_MARGIN_RIGHT = 30.0
_MARGIN_TOP = 30.0
_MARGIN_BOTTOM = 60.0
_PLOT_W = _CANVAS_W - _MARGIN_LEFT - _MARGIN_RIGHT
_PLOT_H = _CANVAS_H - _MARGIN_TOP - _MARGIN_BOTTOM


def write_sweep_csv(points: Sequence[EvalPoint], path: str | Path) -> None:
    """Write sweep results as CSV: 6 decimal places, '.' separator, LF endings."""
    lines = [",".join(CSV_COLUMNS)]
    for p in points:
        if p.ok:
            scores = f"{p.instruction_score:.6f},{p.medical_avg:.6f}"
        else:
            scores = ","
        lines.append(f"{p.recipe.method.value},{p.recipe.weight:.6f},{scores},{p.status}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def read_sweep_csv(path: str | Path) -> list[EvalPoint]:
    """Read a sweep CSV back into EvalPoints (without per-benchmark detail)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: expected CSV header {','.join(CSV_COLUMNS)}")
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} columns, got {len(row)}")
        method, weight, instruction, medical, status = row
        try:
            recipe = MergeRecipe(method=MergeMethod(method), weight=float(weight))
            if status == STATUS_OK:
                points.append(
                    EvalPoint(
                        recipe=recipe,
                        instruction_score=float(instruction),
                        medical_avg=float(medical),
                    )
                )
            else:
                points.append(EvalPoint.failed(recipe))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return points


def load_points(path: str | Path) -> list[EvalPoint]:
    """Load EvalPoints from a sweep manifest (.json) or sweep CSV (.csv)."""
    from .sweep import read_manifest

    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_sweep_csv(path)
    return read_manifest(path)


def write_pareto_report(
    points: Sequence[EvalPoint], result: ParetoResult, path: str | Path
) -> None:
    """Write frontier and near-frontier recipes with their scores and epsilon."""

    def entry(index: int) -> dict[str, object]:
        p = points[index]
        return {
            "index": index,
            "method": p.recipe.method.value,
            "weight": p.recipe.weight,
            "instruction_score": p.instruction_score,
            "medical_avg": p.medical_avg,
        }

    report = {
        "epsilon": result.epsilon,
        "frontier": [entry(i) for i in result.frontier],
        "near_frontier": [entry(i) for i in result.near_frontier],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def _px(x: float) -> float:
    return _MARGIN_LEFT + x * _PLOT_W


def _py(y: float) -> float:
    return _MARGIN_TOP + (1.0 - y) * _PLOT_H


def _svg_open(parts: list[str]) -> None:
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS_W}" height="{_CANVAS_H}" '
        f'viewBox="0 0 {_CANVAS_W} {_CANVAS_H}">'
    )
    parts.append(f'<rect x="0" y="0" width="{_CANVAS_W}" height="{_CANVAS_H}" fill="white"/>')


def _svg_axes(parts: list[str], x_label: str, y_label: str) -> None:
    x0, x1 = _px(0.0), _px(1.0)
    y0, y1 = _py(0.0), _py(1.0)
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>')
    for i in range(6):
        v = i / 5.0
        tx, ty = _px(v), _py(v)
        parts.append(f'<line x1="{tx:.2f}" y1="{y0:.2f}" x2="{tx:.2f}" y2="{y0 + 6:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{tx:.2f}" y="{y0 + 22:.2f}" font-size="12" text-anchor="middle">{v:.1f}</text>'
        )
        parts.append(f'<line x1="{x0 - 6:.2f}" y1="{ty:.2f}" x2="{x0:.2f}" y2="{ty:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 10:.2f}" y="{ty + 4:.2f}" font-size="12" text-anchor="end">{v:.1f}</text>'
        )
    cx = (_MARGIN_LEFT + _CANVAS_W - _MARGIN_RIGHT) / 2.0
    parts.append(
        f'<text x="{cx:.2f}" y="{_CANVAS_H - 14:.2f}" font-size="14" text-anchor="middle">{x_label}</text>'
    )
    cy = (_MARGIN_TOP + _CANVAS_H - _MARGIN_BOTTOM) / 2.0
    parts.append(
        f'<text x="18" y="{cy:.2f}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 18 {cy:.2f})">{y_label}</text>'
    )


def emit_tradeoff_svg(
    points: Sequence[EvalPoint], frontier: ParetoResult, path: str | Path
) -> Path:
    """Write the trade-off scatter plus a companion trajectory SVG.

    One marker per evaluated point; frontier points carry a distinct ring
    marker. The companion (written next to ``path`` with a ``_trajectory``
    suffix) plots both scores against the merge ratio when points carry
    grid weights. Returns the companion's path.
    """
    if not points:
        raise ValueError("cannot plot an empty point set")
    path = Path(path)
    parts: list[str] = []
    _svg_open(parts)
    _svg_axes(parts, "Instruction Following", "Medical Avg")
    frontier_set = set(frontier.frontier)
    near_set = set(frontier.near_frontier) - frontier_set
    for i, p in enumerate(points):
        if not p.ok:
            continue
        cx, cy = _px(p.instruction_score), _py(p.medical_avg)
        parts.append(f'<circle class="pt" cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="steelblue"/>')
        if i in frontier_set:
            parts.append(
                f'<circle class="frontier" cx="{cx:.2f}" cy="{cy:.2f}" r="9" fill="none" '
                f'stroke="darkorange" stroke-width="2"/>'
            )
        elif i in near_set:
            parts.append(
                f'<circle class="near" cx="{cx:.2f}" cy="{cy:.2f}" r="9" fill="none" '
                f'stroke="seagreen" stroke-width="1" stroke-dasharray="3 2"/>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(parts) + "\n")
    companion = path.with_name(path.stem + "_trajectory" + path.suffix)
    emit_trajectory_svg(points, companion)
    return companion


def emit_trajectory_svg(points: Sequence[EvalPoint], path: str | Path) -> None:
    """Plot both scores against the merge ratio: two series, one line each."""
    if not points:
        raise ValueError("cannot plot an empty point set")
    series = [
        ("Medical Avg", "firebrick", "series-medical", lambda p: p.medical_avg),
        ("Instruction Following", "steelblue", "series-instruction", lambda p: p.instruction_score),
    ]
    ordered = sorted((p for p in points if p.ok), key=lambda p: (p.recipe.weight, p.recipe.method.value))
    parts: list[str] = []
    _svg_open(parts)
    _svg_axes(parts, "Merge Ratio", "Score")
    for label, color, css, score in series:
        coords = [(_px(p.recipe.weight), _py(score(p))) for p in ordered]
        if len(coords) >= 2:
            joined = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
            parts.append(f'<polyline class="{css}" points="{joined}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in coords:
            parts.append(f'<circle class="{css}-pt" cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}"/>')
    for row, (label, color, _, _) in enumerate(series):
        ly = _MARGIN_TOP + 16 + 20 * row
        lx = _MARGIN_LEFT + 16
        parts.append(f'<rect x="{lx:.2f}" y="{ly - 9:.2f}" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{lx + 18:.2f}" y="{ly + 2:.2f}" font-size="13">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(parts) + "\n")
