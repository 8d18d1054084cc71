import math
import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_ring
from schelling_ring.dynamics import EngineState, Trace
from schelling_ring.render import RenderOptions, TimeScale, render_ring, write_svg
from schelling_ring.ring import Model, ModelParams, RingConfig

NS = "{http://www.w3.org/2000/svg}"


def parse(svg):
    return ET.fromstring(svg.encode())


def by_class(root, cls):
    return [el for el in root.iter() if el.get("class") == cls]


def params(n, w=1, tau="2/5"):
    return ModelParams(n, w, Fraction(tau), Model.STANDARD)


def test_monochrome_empty_trace():
    trace = Trace(RingConfig(np.ones(40, np.int8)))
    root = parse(render_ring(trace, params(40)))
    assert root.tag == NS + "svg"
    for layer in ("initial", "final"):
        (ring,) = by_class(root, layer)
        assert ring.tag == NS + "circle"
    assert not by_class(root, "event") and not by_class(root, "unhappy")
    assert "events=0" in root.find(NS + "title").text


def test_stable_layer_present_below_kappa(rng):
    config = random_ring(rng, 500)
    trace = Trace(config)
    root = parse(render_ring(trace, params(500, 5, "3/10")))
    assert by_class(root, "stable")


def test_small_trace_arcs_and_marks():
    initial = RingConfig.from_string("ABABABAB")
    trace = Trace(initial, stage=np.array([1, 4, 9]), node=np.array([0, 1, 5]), src=np.array([1, 0, 0], np.int8))
    root = parse(render_ring(trace, params(8)))
    assert len(by_class(root, "initial")) == 8
    marks = by_class(root, "event")
    assert len(marks) == 3
    # ticks point from the centre towards each node's angle
    c = 400.0
    for el, u in zip(marks, (0, 1, 5)):
        x, y = float(el.get("x1")) - c, c - float(el.get("y1"))
        assert math.atan2(x, y) % (2 * math.pi) == pytest.approx(2 * math.pi * (u + 0.5) / 8, abs=0.01)
    # node 0 turned B, nodes 1 and 5 turned A
    assert [el.get("stroke") for el in marks] == ["#000000", "#C8C8C8", "#C8C8C8"]


def test_later_events_sit_further_out():
    initial = RingConfig.from_string("ABABABAB")
    trace = Trace(initial, stage=np.array([1, 2, 50]), node=np.array([0, 2, 4]), src=np.array([1, 1, 1], np.int8))

    def radii(scale):
        root = parse(render_ring(trace, params(8), RenderOptions(time_scale=scale)))
        return [math.hypot(float(e.get("x1")) - 400, float(e.get("y1")) - 400) for e in by_class(root, "event")]

    rank, linear = radii(TimeScale.RANK), radii(TimeScale.LINEAR)
    assert rank == sorted(rank) and linear == sorted(linear)
    assert (linear[1] - linear[0]) < (rank[1] - rank[0])


def test_render_is_byte_identical(tmp_path):
    p = params(600, 4, "19/50")
    outs = []
    for k in range(2):
        state = EngineState(RingConfig((np.random.default_rng(3).random(600) < 0.5).astype(np.int8)), p, 9)
        trace = state.run()
        write_svg(tmp_path / f"{k}.svg", trace, p)
        outs.append((tmp_path / f"{k}.svg").read_bytes())
    assert outs[0] == outs[1]


def test_large_rings_are_binned():
    config = RingConfig.from_string("AB" * 5000)
    root = parse(render_ring(Trace(config), params(10_000), RenderOptions(max_arcs=100)))
    assert 0 < len(by_class(root, "initial")) <= 100


def test_mark_cap():
    initial = RingConfig.from_string("AB" * 50)
    m = 500
    trace = Trace(initial, stage=np.arange(m), node=np.arange(m) % 100, src=np.ones(m, np.int8))
    root = parse(render_ring(trace, params(100), RenderOptions(max_marks=50)))
    assert len(by_class(root, "event")) == 50


def test_options_validation():
    with pytest.raises(ValueError):
        RenderOptions(initial=(0.5, 0.4))
    with pytest.raises(ValueError):
        RenderOptions(final=(0.9, 1.2))
    with pytest.raises(ValueError):
        RenderOptions(max_arcs=0)
    assert RenderOptions(time_scale="linear").time_scale is TimeScale.LINEAR
    with pytest.raises(ValueError):
        render_ring(Trace(RingConfig.from_string("AB" * 4)), params(10))
