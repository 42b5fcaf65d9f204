"""Tiny deterministic SVG writers for reports (no plotting dependency)."""

from __future__ import annotations

from html import escape
from typing import Mapping, Sequence

PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"]


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="start", size=None, rotate=None) -> str:
    extra = f' font-size="{size}"' if size else ""
    if rotate is not None:
        extra += f' transform="rotate({rotate} {_num(x)} {_num(y)})"'
    return f'<text x="{_num(x)}" y="{_num(y)}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'


def bar_chart(title: str, categories: Sequence[str], series: Mapping[str, Sequence[float]],
              baseline: float | None = None, y_min: float = 0.0, y_max: float = 1.0) -> str:
    """Grouped bars: one group per category, one bar per series."""
    names = list(series)
    group_w = max(40, 14 * len(names) + 16)
    left, top, plot_h = 50, 30, 200
    width = left + group_w * max(1, len(categories)) + 140
    height = top + plot_h + 70
    span = (y_max - y_min) or 1.0

    def y_of(v):
        v = min(max(v, y_min), y_max)
        return top + plot_h * (1 - (v - y_min) / span)

    body = [_text(width / 2, 18, title, "middle", 13)]
    body.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{width - 130}" y2="{top + plot_h}" stroke="black"/>')
    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>')
    for i in range(5):
        v = y_min + span * i / 4
        body.append(_text(left - 4, y_of(v) + 4, _num(v), "end"))
    for ci, cat in enumerate(categories):
        x0 = left + ci * group_w + 8
        for si, name in enumerate(names):
            v = series[name][ci]
            if v != v:
                continue
            y = y_of(v)
            body.append(
                f'<rect x="{_num(x0 + si * 14)}" y="{_num(y)}" width="12" height="{_num(top + plot_h - y)}" '
                f'fill="{PALETTE[si % len(PALETTE)]}"><title>{escape(name)} {escape(str(cat))}: {v:.4f}</title></rect>'
            )
        body.append(_text(x0 + group_w / 2 - 8, top + plot_h + 14, cat, "end", rotate=-35))
    if baseline is not None:
        y = y_of(baseline)
        body.append(
            f'<line x1="{left}" y1="{_num(y)}" x2="{width - 130}" y2="{_num(y)}" stroke="gray" stroke-dasharray="4 3"/>'
        )
    for si, name in enumerate(names):
        y = top + 10 + 16 * si
        body.append(f'<rect x="{width - 120}" y="{y - 9}" width="10" height="10" fill="{PALETTE[si % len(PALETTE)]}"/>')
        body.append(_text(width - 105, y, name))
    return _doc(width, height, body)


def rank_heatmap(title: str, rows: Sequence[str], cols: Sequence[str], ranks) -> str:
    """Grid of integer ranks; darker cells mean a better (lower) rank."""
    cell, left, top = 28, 190, 110
    width = left + cell * max(1, len(cols)) + 20
    height = top + cell * max(1, len(rows)) + 20
    worst = max([r for row in ranks for r in row if r is not None] or [1])
    body = [_text(width / 2, 18, title, "middle", 13)]
    for j, c in enumerate(cols):
        body.append(_text(left + j * cell + cell / 2, top - 6, c, "start", rotate=-60))
    for i, r in enumerate(rows):
        body.append(_text(left - 6, top + i * cell + cell / 2 + 4, r, "end"))
        for j in range(len(cols)):
            rank = ranks[i][j]
            if rank is None:
                shade, label = "#eeeeee", ""
            else:
                level = 1.0 - (rank - 1) / max(1, worst)
                g = int(235 - 185 * level)
                shade, label = f"rgb({g},{g},{min(255, g + 20)})", str(rank)
            body.append(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                f'fill="{shade}" stroke="white"/>'
            )
            colour = "white" if rank is not None and rank <= worst / 2 else "black"
            body.append(
                f'<text x="{left + j * cell + cell / 2}" y="{top + i * cell + cell / 2 + 4}" '
                f'text-anchor="middle" fill="{colour}">{label}</text>'
            )
    return _doc(width, height, body)


def band_chart(title: str, labels: Sequence[str], bands: Sequence[Mapping[str, float]], x_label: str = "") -> str:
    """Per-bin quantile bands (q05-q95 whisker, q25-q75 box, median tick)."""
    left, top, plot_h, bin_w = 60, 30, 200, 46
    width = left + bin_w * max(1, len(bands)) + 20
    height = top + plot_h + 70
    body = [_text(width / 2, 18, title, "middle", 13)]
    if not bands:
        body.append(_text(width / 2, top + plot_h / 2, "no rows", "middle"))
        return _doc(width, height, body)
    lo = min(b["q05"] for b in bands)
    hi = max(b["q95"] for b in bands)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0

    def y_of(v):
        return top + plot_h * (1 - (v - lo) / (hi - lo))

    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>')
    for i in range(5):
        v = lo + (hi - lo) * i / 4
        body.append(_text(left - 4, y_of(v) + 4, f"{v:.3g}", "end"))
    if lo < 0 < hi:
        body.append(
            f'<line x1="{left}" y1="{_num(y_of(0))}" x2="{width - 20}" y2="{_num(y_of(0))}" '
            f'stroke="gray" stroke-dasharray="4 3"/>'
        )
    for i, (lab, b) in enumerate(zip(labels, bands)):
        cx = left + i * bin_w + bin_w / 2
        body.append(
            f'<line x1="{_num(cx)}" y1="{_num(y_of(b["q95"]))}" x2="{_num(cx)}" y2="{_num(y_of(b["q05"]))}" stroke="black"/>'
        )
        y75, y25 = y_of(b["q75"]), y_of(b["q25"])
        body.append(
            f'<rect x="{_num(cx - 12)}" y="{_num(y75)}" width="24" height="{_num(max(y25 - y75, 1))}" '
            f'fill="{PALETTE[0]}" fill-opacity="0.6" stroke="black"/>'
        )
        ym = y_of(b["q50"])
        body.append(f'<line x1="{_num(cx - 12)}" y1="{_num(ym)}" x2="{_num(cx + 12)}" y2="{_num(ym)}" stroke="black"/>')
        body.append(_text(cx, top + plot_h + 14, lab, "end", rotate=-35))
    if x_label:
        body.append(_text(width / 2, height - 6, x_label, "middle"))
    return _doc(width, height, body)
