"""Tiny standalone SVG line charts (no external assets)."""

from __future__ import annotations


def _fmt(x):
    return f"{x:.2f}".rstrip("0").rstrip(".")


def line_chart(
    series,
    path,
    title="",
    x_label="epoch",
    y_label="",
    width=640,
    height=420,
    y_range=(0.0, 1.0),
):
    """Write an SVG line chart.

    ``series`` is a list of dicts with keys ``label``, ``x``, ``y``,
    ``color`` and optional ``dashed`` (dotted line, used to distinguish
    training registers).
    """
    margin = {"left": 56, "right": 16, "top": 36, "bottom": 44}
    plot_w = width - margin["left"] - margin["right"]
    plot_h = height - margin["top"] - margin["bottom"]
    xs = [x for s in series for x in s["x"]]
    if not xs:
        raise ValueError("no data to plot")
    x_min, x_max = min(xs), max(xs)
    x_span = (x_max - x_min) or 1.0
    y_min, y_max = y_range
    y_span = (y_max - y_min) or 1.0

    def px(x):
        return margin["left"] + (x - x_min) / x_span * plot_w

    def py(y):
        return margin["top"] + (1.0 - (y - y_min) / y_span) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes + ticks
    out.append(
        f'<rect x="{margin["left"]}" y="{margin["top"]}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="black"/>'
    )
    for i in range(5):
        y_val = y_min + y_span * i / 4
        y = py(y_val)
        out.append(
            f'<line x1="{margin["left"] - 4}" y1="{y:.1f}" x2="{margin["left"]}" '
            f'y2="{y:.1f}" stroke="black"/>'
        )
        out.append(
            f'<text x="{margin["left"] - 8}" y="{y + 4:.1f}" text-anchor="end">'
            f"{_fmt(y_val)}</text>"
        )
    n_xticks = min(10, int(x_span)) or 1
    for i in range(n_xticks + 1):
        x_val = x_min + x_span * i / n_xticks
        x = px(x_val)
        base = margin["top"] + plot_h
        out.append(f'<line x1="{x:.1f}" y1="{base}" x2="{x:.1f}" y2="{base + 4}" stroke="black"/>')
        out.append(
            f'<text x="{x:.1f}" y="{base + 16}" text-anchor="middle">{_fmt(x_val)}</text>'
        )
    out.append(
        f'<text x="{margin["left"] + plot_w / 2}" y="{height - 8}" '
        f'text-anchor="middle">{x_label}</text>'
    )
    if y_label:
        out.append(
            f'<text x="14" y="{margin["top"] + plot_h / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {margin["top"] + plot_h / 2})">{y_label}</text>'
        )
    # series
    for i, s in enumerate(series):
        points = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(s["x"], s["y"]))
        dash = ' stroke-dasharray="2,4"' if s.get("dashed") else ""
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{s["color"]}" '
            f'stroke-width="1.5"{dash}/>'
        )
        lx = margin["left"] + 8
        ly = margin["top"] + 14 + 16 * i
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
            f'stroke="{s["color"]}" stroke-width="1.5"{dash}/>'
        )
        out.append(f'<text x="{lx + 30}" y="{ly}">{s["label"]}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
