import re

import numpy as np
import pytest

from conftest import CVAR_BUSY, field_for, make_map, rect_cells
from utils.cost_field import CostField, CostFieldConfig
from utils.errors import RenderError
from utils.planner import PlannerConfig, astar
from utils.renderer import RenderSpec, default_path_colour, field_intensity, render_overlay


def _pgm_pixels(data):
    header_end = 0
    fields = []
    for line in data.split(b"\n"):
        header_end += len(line) + 1
        if line.startswith(b"#"):
            continue
        fields += line.split()
        if len(fields) >= 4:
            break
    width, height = int(fields[1]), int(fields[2])
    return np.frombuffer(data[header_end:], dtype=np.uint8).reshape(height, width)


@pytest.fixture
def site_spec(construction_map):
    field = field_for(construction_map, list(CVAR_BUSY))
    path = astar(construction_map, field, PlannerConfig(gamma=0.0)).path
    return RenderSpec(
        field=field,
        map=construction_map,
        paths=[("astar", path, default_path_colour(0))],
        cell_pixels=4,
        title="busy site",
        metadata={"seed": 7},
    )


def test_zero_field_renders_uniform(construction_map):
    intensity = field_intensity(field_for(construction_map, 0.0))
    free = ~construction_map.obstacle_mask
    assert len(np.unique(intensity[free])) == 1


def test_idle_class_renders_dimmer():
    semantic_map = make_map(
        30, 12, (0, 0), (29, 11),
        [("forklift", rect_cells(5, 5, 6, 6)), ("crane", rect_cells(22, 5, 23, 6))],
    )
    field = field_for(semantic_map, {"forklift": 0.177, "crane": 0.626})
    spec = RenderSpec(field=field, map=semantic_map, cell_pixels=1)
    pixels = _pgm_pixels(render_overlay(spec, "pgm"))

    def neighbourhood_mean(x0, y0, x1, y1):
        window = pixels[y0 - 3:y1 + 4, x0 - 3:x1 + 4].astype(float)
        blocked = semantic_map.obstacle_mask[y0 - 3:y1 + 4, x0 - 3:x1 + 4]
        return window[~blocked].mean()

    assert neighbourhood_mean(5, 5, 6, 6) < neighbourhood_mean(22, 5, 23, 6)


def test_intensity_is_monotone_in_phi(construction_map):
    field = field_for(construction_map, list(CVAR_BUSY))
    intensity = field_intensity(field)
    free = np.isfinite(field.phi)
    phi, shade = field.phi[free], intensity[free].astype(int)
    order = np.argsort(phi, kind="stable")
    assert np.all(np.diff(shade[order]) >= 0)
    assert shade.max() == 255


def test_identical_specs_give_identical_bytes(site_spec):
    for fmt in ("svg", "pgm"):
        assert render_overlay(site_spec, fmt) == render_overlay(site_spec, fmt)


def test_svg_content(site_spec):
    svg = render_overlay(site_spec).decode("utf-8")
    assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>')
    assert svg.rstrip().endswith("</svg>")
    assert "<polyline" in svg and "astar" in svg and "busy site" in svg
    for name in site_spec.map.class_names:
        assert f'id="class-{name}"' in svg
    assert "forklift lambda=0.741" in svg
    assert '"seed":7' in svg

    width, height = (int(v) for v in re.search(r'width="(\d+)" height="(\d+)"', svg).groups())
    assert width == 80 * 4 and height > 40 * 4
    for x, y in re.findall(r'(\d+(?:\.\d+)?),(\d+(?:\.\d+)?)', svg.split("<polyline", 1)[1].split("/>", 1)[0]):
        assert 0 <= float(x) <= width
        assert 0 <= float(y) <= 40 * 4


def test_pgm_header_and_scaling(site_spec):
    data = render_overlay(site_spec, "pgm")
    assert data.startswith(b"P5\n# phi_max=")
    pixels = _pgm_pixels(data)
    assert pixels.shape == (40 * 4, 80 * 4)
    # obstacle cells are black
    assert pixels[15 * 4 - 1, 30 * 4] == 0


def test_path_outside_map_is_rejected(site_spec):
    site_spec.paths = [("bad", [(0, 0), (80, 0)], "#000000")]
    with pytest.raises(RenderError) as excinfo:
        render_overlay(site_spec)
    assert excinfo.value.code == "invalid_spec"


def test_zero_size_field_is_rejected(construction_map):
    empty = CostField(phi=np.zeros((0, 0)), lambda_scaled={}, config=CostFieldConfig())
    with pytest.raises(RenderError) as excinfo:
        render_overlay(RenderSpec(field=empty, map=construction_map))
    assert excinfo.value.code == "empty_map"


@pytest.mark.parametrize("kwargs", [{"cell_pixels": 0}, {"fmt": "png"}])
def test_invalid_spec(site_spec, kwargs):
    if "cell_pixels" in kwargs:
        site_spec.cell_pixels = kwargs["cell_pixels"]
    with pytest.raises(RenderError):
        render_overlay(site_spec, kwargs.get("fmt", "svg"))
