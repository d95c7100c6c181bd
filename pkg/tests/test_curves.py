import re
import xml.etree.ElementTree as ET

import pytest

from fruitcnn.curves import render_svg
from fruitcnn.trainer import EpochRecord, TrainHistory

NS = {"svg": "http://www.w3.org/2000/svg"}


def _history(n=15):
    rows = [EpochRecord(e, 1.0 / e, 1 - 0.5 / e, 1.2 / e, 1 - 0.6 / e, 0.002, 1.0) for e in range(1, n + 1)]
    return TrainHistory(rows)


def parse_series(svg_text):
    """Map series name -> list of (epoch, value) recovered by inverting each panel's axis transform."""
    root = ET.fromstring(svg_text)
    out = {}
    for g in root.findall("svg:g", NS):
        a = {k: float(g.get(k)) for k in ("data-x0", "data-x1", "data-y0", "data-y1",
                                          "data-left", "data-top", "data-width", "data-height")}
        for line in g.findall("svg:polyline", NS):
            pts = []
            for pair in line.get("points").split():
                px, py = map(float, pair.split(","))
                x = a["data-x0"] + (px - a["data-left"]) / a["data-width"] * (a["data-x1"] - a["data-x0"])
                y = a["data-y0"] + (a["data-top"] + a["data-height"] - py) / a["data-height"] * (a["data-y1"] - a["data-y0"])
                pts.append((x, y))
            out[line.get("data-series")] = pts
    return out


def test_four_polylines_with_fifteen_vertices():
    svg = render_svg(_history())
    series = parse_series(svg)
    assert sorted(series) == ["test_acc", "test_loss", "train_acc", "train_loss"]
    assert all(len(v) == 15 for v in series.values())
    assert "epoch" in svg and "accuracy" in svg and "loss" in svg


def test_parse_back_within_half_percent():
    h = _history()
    series = parse_series(render_svg(h))
    for name, pts in series.items():
        for (x, y), rec in zip(pts, h.rows):
            assert x == pytest.approx(rec.epoch, rel=0.005)
            assert y == pytest.approx(getattr(rec, name), rel=0.005)


def test_single_epoch_renders():
    series = parse_series(render_svg(_history(1)))
    assert len(series["train_acc"]) == 1
