"""Accuracy/loss curves as a dependency-free two-panel SVG."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .trainer import TrainHistory

PANEL_W, PANEL_H = 420, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 40, 50
COLORS = {"train": "#1f77b4", "test": "#d62728"}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _panel(ox: float, title: str, ylabel: str, epochs, series: dict[str, list[float]],
           y_range: tuple[float, float]) -> list[str]:
    x0, x1 = min(epochs), max(epochs)
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = y_range
    left, top = ox + MARGIN_L, MARGIN_T
    width = PANEL_W - MARGIN_L - MARGIN_R
    height = PANEL_H - MARGIN_T - MARGIN_B

    def px(x):
        return left + (x - x0) / (x1 - x0) * width

    def py(y):
        return top + height - (y - y0) / (y1 - y0) * height

    out = [
        f'<g class="panel" data-metric="{escape(ylabel)}" data-x0="{x0!r}" data-x1="{x1!r}" '
        f'data-y0="{y0!r}" data-y1="{y1!r}" data-left="{left}" data-top="{top}" '
        f'data-width="{width}" data-height="{height}">',
        f'<text x="{left + width / 2}" y="{top - 15}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{width}" height="{height}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(y0, y1):
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.3f}" x2="{left}" y2="{y:.3f}" stroke="#444"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.3f}" text-anchor="end" font-size="10">{t:.3g}</text>')
    for e in sorted(set(epochs)):
        x = px(e)
        out.append(f'<line x1="{x:.3f}" y1="{top + height}" x2="{x:.3f}" y2="{top + height + 4}" stroke="#444"/>')
        out.append(f'<text x="{x:.3f}" y="{top + height + 16}" text-anchor="middle" font-size="10">{e:g}</text>')
    out.append(f'<text x="{left + width / 2}" y="{PANEL_H - 10}" text-anchor="middle" font-size="12">epoch</text>')
    out.append(f'<text x="{ox + 15}" y="{top + height / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {ox + 15} {top + height / 2})">{escape(ylabel)}</text>')
    for k, (name, values) in enumerate(series.items()):
        split = name.split("_")[0]
        pts = " ".join(f"{px(e):.4f},{py(v):.4f}" for e, v in zip(epochs, values))
        out.append(f'<polyline data-series="{name}" fill="none" stroke="{COLORS[split]}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 14 * k
        out.append(f'<line x1="{left + width - 70}" y1="{ly - 4}" x2="{left + width - 55}" y2="{ly - 4}" '
                   f'stroke="{COLORS[split]}" stroke-width="2"/>')
        out.append(f'<text x="{left + width - 50}" y="{ly}" font-size="10">{split}</text>')
    out.append("</g>")
    return out


def render_svg(history: TrainHistory, title: str = "") -> str:
    epochs = [float(e) for e in history.column("epoch")]
    losses = history.column("train_loss") + history.column("test_loss")
    top_loss = max(losses) * 1.05 if max(losses) > 0 else 1.0
    body = ['<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_W}" height="{PANEL_H}" '
            f'viewBox="0 0 {2 * PANEL_W} {PANEL_H}">',
            f'<title>{escape(title or "training curves")}</title>',
            '<rect width="100%" height="100%" fill="white"/>']
    body += _panel(0, "Accuracy", "accuracy", epochs,
                   {"train_acc": history.column("train_acc"), "test_acc": history.column("test_acc")},
                   (0.0, 1.0))
    body += _panel(PANEL_W, "Loss", "loss", epochs,
                   {"train_loss": history.column("train_loss"), "test_loss": history.column("test_loss")},
                   (0.0, top_loss))
    body.append("</svg>")
    return "\n".join(body) + "\n"
