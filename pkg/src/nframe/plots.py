"""Self-contained SVG charts (polyline curves and heatmaps).

Charts are a dozen series at most, so SVG is assembled directly; output is
deterministic (fixed float formatting, no timestamps).
"""

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a",
)

_W, _H = 860, 520
_ML, _MR, _MT, _MB = 70, 160, 40, 70


def _esc(text) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _viridis_like(t: float) -> str:
    stops = ((0.19, 0.07, 0.23), (0.13, 0.56, 0.55), (0.99, 0.91, 0.14))
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        a, b, u = stops[0], stops[1], t * 2.0
    else:
        a, b, u = stops[1], stops[2], (t - 0.5) * 2.0
    rgb = [int(round(255 * (x + (y - x) * u))) for x, y in zip(a, b)]
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def line_chart_svg(path, series, x_labels, title, ylabel) -> None:
    """``series`` holds dicts with label, values, and optional ci_low/ci_high."""
    n = len(x_labels)
    lo = min(min(s.get("ci_low", s["values"])) for s in series)
    hi = max(max(s.get("ci_high", s["values"])) for s in series)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(i):
        return _ML + (plot_w * i / max(n - 1, 1))

    def py(v):
        return _MT + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_esc(title)}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + plot_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_ML + plot_w}" y2="{_MT + plot_h}" '
        f'stroke="black"/>'
    )
    for tick in range(5):
        v = lo + (hi - lo) * tick / 4.0
        y = py(v)
        parts.append(f'<line x1="{_ML - 4}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{v:.3g}</text>'
        )
    for i, label in enumerate(x_labels):
        parts.append(
            f'<text x="{px(i):.2f}" y="{_MT + plot_h + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{_esc(label)}</text>'
        )
    parts.append(
        f'<text x="18" y="{_MT + plot_h / 2:.2f}" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 18 {_MT + plot_h / 2:.2f})" text-anchor="middle">'
        f"{_esc(ylabel)}</text>"
    )
    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        if "ci_low" in s and "ci_high" in s:
            upper = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(s["ci_high"]))
            lower = " ".join(
                f"{px(i):.2f},{py(v):.2f}"
                for i, v in reversed(list(enumerate(s["ci_low"])))
            )
            parts.append(
                f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.15" '
                f'stroke="none"/>'
            )
        points = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(s["values"]))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = _MT + 16 + 18 * idx
        parts.append(
            f'<line x1="{_W - _MR + 10}" y1="{ly}" x2="{_W - _MR + 34}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_W - _MR + 40}" y="{ly + 4}" font-size="11" '
            f'font-family="sans-serif">{_esc(s["label"])}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def heatmap_svg(path, matrix, row_labels, col_labels, title) -> None:
    """Cells colored on [0, 1]; one rect per (row, col) with its value."""
    cell = 52
    ml, mt = 120, 70
    width = ml + cell * len(col_labels) + 30
    height = mt + cell * len(row_labels) + 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{_esc(title)}</text>',
    ]
    for j, label in enumerate(col_labels):
        parts.append(
            f'<text x="{ml + cell * j + cell // 2}" y="{mt - 10}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{_esc(label)}</text>'
        )
    for i, rlabel in enumerate(row_labels):
        parts.append(
            f'<text x="{ml - 8}" y="{mt + cell * i + cell // 2 + 4}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{_esc(rlabel)}</text>'
        )
        for j in range(len(col_labels)):
            v = matrix[i][j]
            if v is None:
                fill, text = "#dddddd", "-"
            else:
                fill, text = _viridis_like(v), f"{v:.2f}"
            tcolor = "#ffffff" if (v is None or v < 0.6) else "#000000"
            x, y = ml + cell * j, mt + cell * i
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                f'stroke="white"/>'
            )
            parts.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif" fill="{tcolor}">{text}</text>'
            )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
