"""Deterministic CSV / JSON / SVG writers for scenario outputs."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from . import __version__

EFFECT_COLUMNS = ("population_label", "mu_x", "measure", "estimand_kind", "value", "se", "model", "pair")
BIAS_COLUMNS = ("target_label", "mu_x", "measure", "estimand_kind", "mechanism", "transported",
                "truth", "bias", "ess", "model", "se")
CLASSIFICATION_COLUMNS = ("model", "measure", "estimand_kind", "link", "sema", "scale_aligned",
                          "collapsible", "directly_transportable", "population_dependence",
                          "spread", "agrees")


def header_fields(name: str, base_seed: int, mode: str, mechanism: str) -> dict:
    return {"scenario": name, "base_seed": base_seed, "mode": mode, "mechanism": mechanism,
            "version": __version__}


def header_line(fields: dict) -> str:
    return "transportlab " + " ".join(f"{k}={v}" for k, v in fields.items())


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render_csv(columns: Sequence[str], rows: Sequence[dict], header: dict) -> str:
    lines = ["# " + header_line(header), ",".join(columns)]
    for r in rows:
        lines.append(",".join(fmt(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def render_json(payload: dict, header: dict) -> str:
    return json.dumps({"header": header, **payload}, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# SVG line chart

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 800, 500
ML, MR, MT, MB = 80, 170, 50, 60


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    k = 0
    while start + k * step <= hi + 1e-9 * step:
        ticks.append(round(start + k * step, 12))
        k += 1
    return ticks


def render_svg(title: str, series: dict, comparator_x: float, header: dict,
               x_label: str = "mean of X in target population", y_label: str = "bias") -> str:
    """Line chart of ``series`` (label -> [(x, y), ...]) with a dashed comparator line."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts if math.isfinite(y)]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [0.0])
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - ML - MR, H - MT - MB

    def px(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MT + (y1 - y) / (y1 - y0) * ph

    out = [
        f"<!-- {header_line(header)} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{MT + ph}" x2="{px(t):.2f}" y2="{MT + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{px(t):.2f}" y="{MT + ph + 20}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{ML - 5}" y1="{py(t):.2f}" x2="{ML + pw}" y2="{py(t):.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{ML - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    if y0 <= 0 <= y1:
        out.append(f'<line x1="{ML}" y1="{py(0):.2f}" x2="{ML + pw}" y2="{py(0):.2f}" stroke="#888"/>')
    cx = px(comparator_x)
    out.append(f'<line x1="{cx:.2f}" y1="{MT}" x2="{cx:.2f}" y2="{MT + ph}" stroke="#000" '
               'stroke-dasharray="6,4"/>')
    for i, (label, pts) in enumerate(series.items()):
        colour = _PALETTE[i % len(_PALETTE)]
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{path}"/>')
        ly = MT + 20 + 20 * i
        out.append(f'<line x1="{ML + pw + 15}" y1="{ly}" x2="{ML + pw + 40}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{ML + pw + 45}" y="{ly + 4}">{label}</text>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 15}" text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="20" y="{MT + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {MT + ph / 2:.1f})">{y_label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_all(outdir: Path, files: dict) -> list[Path]:
    """Write ``{filename: text}`` after all content is computed."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        p = outdir / name
        p.write_text(files[name])
        written.append(p)
    return written
