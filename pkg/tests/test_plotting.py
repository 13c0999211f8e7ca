"""Tests for the SVG phase plots."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from geocert.bounds import Box
from geocert.plotting import phase_plot_svg, write_phase_svg
from geocert.reach import ReachResult

SVG_NS = "{http://www.w3.org/2000/svg}"


def make_result(T, dim, rng):
    boxes = []
    lo = rng.normal(size=dim)
    for t in range(T + 1):
        w = 0.2 + 0.1 * t
        boxes.append(Box(lo - w, lo + w))
    controls = tuple(Box([-1.0], [1.0]) for _ in range(T))
    return ReachResult(tuple(boxes), controls, (0.5,) * T, {})


def elements(svg, tag):
    return ET.fromstring(svg).iter(f"{SVG_NS}{tag}")


class TestPhasePlot:
    def test_rect_count_is_boxes_per_panel(self):
        rng = np.random.default_rng(0)
        for T, dim, panels in ((0, 2, 1), (3, 2, 1), (5, 4, 2), (2, 1, 1)):
            svg = phase_plot_svg(make_result(T, dim, rng))
            rects = list(elements(svg, "rect"))
            assert len(rects) == (T + 1) * panels, (T, dim)

    def test_well_formed_and_sized(self):
        rng = np.random.default_rng(1)
        svg = phase_plot_svg(make_result(4, 4, rng))
        root = ET.fromstring(svg)
        w, h = float(root.get("width")), float(root.get("height"))
        for r in elements(svg, "rect"):
            x, y = float(r.get("x")), float(r.get("y"))
            assert 0 <= x <= w and 0 <= y <= h
            assert float(r.get("width")) > 0 and float(r.get("height")) > 0
            assert r.get("fill") == "none"

    def test_samples_drawn_as_circles(self):
        rng = np.random.default_rng(2)
        res = make_result(2, 2, rng)
        samples = np.stack([np.stack([b.sample(rng, 1)[0] for b in res.boxes]) for _ in range(7)])
        svg = phase_plot_svg(res, samples)
        assert len(list(elements(svg, "circle"))) == 7 * 3
        assert len(list(elements(svg, "rect"))) == 3

    def test_no_circles_without_samples(self):
        rng = np.random.default_rng(3)
        svg = phase_plot_svg(make_result(2, 2, rng))
        assert list(elements(svg, "circle")) == []

    def test_axes_are_lines(self):
        rng = np.random.default_rng(4)
        svg = phase_plot_svg(make_result(1, 4, rng))
        assert len(list(elements(svg, "line"))) == 2 * 2

    def test_state_names_appear(self):
        rng = np.random.default_rng(5)
        svg = phase_plot_svg(make_result(1, 2, rng), state_names=("angle", "speed"))
        assert "angle" in svg and "speed" in svg

    def test_degenerate_boxes_ok(self):
        x = np.array([0.3, -0.2])
        res = ReachResult((Box(x, x),), (), (), {})
        svg = phase_plot_svg(res)
        assert len(list(elements(svg, "rect"))) == 1

    def test_bad_sample_shape_rejected(self):
        rng = np.random.default_rng(6)
        res = make_result(1, 2, rng)
        with pytest.raises(ValueError, match="shape"):
            phase_plot_svg(res, np.zeros((3, 2, 5)))

    def test_write_helper(self, tmp_path):
        rng = np.random.default_rng(7)
        path = write_phase_svg(tmp_path / "phase.svg", make_result(2, 2, rng))
        assert path.read_text().startswith("<svg")
