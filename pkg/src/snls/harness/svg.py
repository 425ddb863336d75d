"""Minimal dependency-free SVG writers for report plots."""

from __future__ import annotations

W, H = 640, 400
MARGIN = 56


def _svg_header() -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">\n<rect width="{W}" height="{H}" fill="white"/>\n'
    )


def _axis(title: str) -> str:
    return (
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" y2="{H - MARGIN}" '
        f'stroke="black"/>\n'
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>\n'
        f'<text x="{W // 2}" y="24" text-anchor="middle" font-size="14">{title}</text>\n'
    )


def _scale(values: list[float], lo_px: float, hi_px: float) -> tuple[float, float, float]:
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    span = hi_px - lo_px
    return lo, hi, span


def fewshot_curve_svg(shots: list[int], means: list[float], stds: list[float],
                      title: str = "few-shot adaptation") -> str:
    """Mean +/- std macro-F1 against the per-class shot budget."""
    parts = [_svg_header(), _axis(title)]
    if shots:
        xlo, xhi, xspan = _scale([float(s) for s in shots], 0, W - 2 * MARGIN)
        ylo, yhi = 0.0, 1.0
        px = lambda s: MARGIN + (s - xlo) / (xhi - xlo) * xspan if xhi > xlo else MARGIN
        py = lambda v: H - MARGIN - (v - ylo) / (yhi - ylo) * (H - 2 * MARGIN)
        points = []
        for shot, mean, std in zip(shots, means, stds):
            x, y = px(shot), py(mean)
            points.append(f"{x:.1f},{y:.1f}")
            parts.append(
                f'<line x1="{x:.1f}" y1="{py(mean - std):.1f}" '
                f'x2="{x:.1f}" y2="{py(mean + std):.1f}" stroke="steelblue"/>\n'
            )
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3.5" fill="steelblue"/>\n')
            parts.append(
                f'<text x="{x:.1f}" y="{H - MARGIN + 18}" text-anchor="middle" '
                f'font-size="11">{shot}</text>\n'
            )
        parts.append(
            f'<polyline points="{" ".join(points)}" fill="none" stroke="steelblue"/>\n'
        )
        for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
            parts.append(
                f'<text x="{MARGIN - 8}" y="{py(tick) + 4:.1f}" text-anchor="end" '
                f'font-size="11">{tick:.2f}</text>\n'
            )
    parts.append("</svg>\n")
    return "".join(parts)


def per_class_f1_svg(per_class: dict[str, float], title: str = "per-class F1") -> str:
    """Horizontal bar per class, clamped to [0, 1]."""
    parts = [_svg_header(), _axis(title)]
    classes = sorted(per_class)
    if classes:
        slot = (H - 2 * MARGIN) / len(classes)
        width = W - 2 * MARGIN
        for i, c in enumerate(classes):
            v = min(max(per_class[c], 0.0), 1.0)
            y = MARGIN + i * slot
            parts.append(
                f'<rect x="{MARGIN}" y="{y + slot * 0.2:.1f}" width="{v * width:.1f}" '
                f'height="{slot * 0.6:.1f}" fill="darkseagreen"/>\n'
            )
            parts.append(
                f'<text x="{MARGIN + 4}" y="{y + slot * 0.62:.1f}" font-size="11">'
                f"{c} ({v:.3f})</text>\n"
            )
    parts.append("</svg>\n")
    return "".join(parts)


def loss_curves_svg(train: list[float], val: list[float], title: str = "loss curves") -> str:
    """Train and validation loss per epoch."""
    parts = [_svg_header(), _axis(title)]
    if train:
        values = [v for v in train + val if v == v]
        ylo, yhi, _ = _scale(values, 0, 1)
        n = max(len(train), 2)
        px = lambda i: MARGIN + i / (n - 1) * (W - 2 * MARGIN)
        py = lambda v: H - MARGIN - (v - ylo) / (yhi - ylo) * (H - 2 * MARGIN)
        for series, color in ((train, "indianred"), (val, "steelblue")):
            pts = " ".join(f"{px(i):.1f},{py(v):.1f}" for i, v in enumerate(series) if v == v)
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>\n')
        parts.append(
            f'<text x="{W - MARGIN}" y="{MARGIN - 8}" text-anchor="end" font-size="11">'
            f"train: red, val: blue</text>\n"
        )
    parts.append("</svg>\n")
    return "".join(parts)
