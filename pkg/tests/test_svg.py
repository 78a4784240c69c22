import xml.etree.ElementTree as ET

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ginnbo import svg

NS = "{http://www.w3.org/2000/svg}"


def test_figure_is_valid_svg(tmp_path):
    fig = svg.Figure(1, 2, title="a & b")
    x = np.linspace(0, 1, 20)
    fig[0, 0].line(x, np.sin(x), label="sin <x>")
    fig[0, 0].band(x, np.sin(x) - 0.1, np.sin(x) + 0.1)
    fig[0, 0].points(x[:3], np.sin(x[:3]))
    fig[0, 1].log_y = True
    fig[0, 1].line(x, np.exp(-5 * x))
    path = tmp_path / "f.svg"
    fig.save(path)
    root = ET.parse(path).getroot()
    assert root.tag == NS + "svg" and root.get("version") == "1.1"
    assert len(root.findall(f"{NS}polyline")) == 2
    assert len(root.findall(f"{NS}polygon")) == 1
    assert len(root.findall(f"{NS}circle")) == 3


def test_log_axis_skips_nonpositive_values():
    fig = svg.Figure()
    fig[0, 0].log_y = True
    fig[0, 0].line([1, 2, 3, 4], [1.0, 0.0, 1e-3, np.nan])
    root = ET.fromstring(fig.to_string().split("\n", 1)[1])
    pts = root.find(f"{NS}polyline").get("points").split()
    assert len(pts) == 2


def test_empty_and_constant_panels_render():
    fig = svg.Figure(1, 2)
    fig[0, 1].line([0, 1], [2.0, 2.0])
    ET.fromstring(fig.to_string().split("\n", 1)[1])


@given(lo=st.floats(-1e6, 1e6), width=st.floats(1e-6, 1e6))
def test_nice_ticks_lie_in_range(lo, width):
    hi = lo + width
    ticks = svg.nice_ticks(lo, hi)
    assert 1 <= len(ticks) <= 12
    span = hi - lo
    assert all(lo - 1e-6 * span <= t <= hi + 1e-6 * span for t in ticks)
