# File: utils/renderer.py
"""
Static figures: cost-field heatmap with solid obstacles and path overlays

SVG output uses rect/polyline/text only; PGM output is the bare field.
Both are deterministic for identical inputs.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np
import orjson

from utils.cost_field import CostField
from utils.errors import RenderError
from utils.export import export_to_pgm
from utils.semantic_map import Cell, SemanticMap

logger = logging.getLogger(__name__)

CLASS_COLOURS = ("#3b6fb6", "#d9822b", "#3a9a5b", "#b8423c", "#7d5ba6", "#8c6d4f")
PATH_COLOURS = ("#00b4d8", "#ff006e", "#ffbe0b", "#8338ec", "#3a86ff")

LEGEND_ROW = 16


@dataclass
class RenderSpec:
    """What to draw: a field on its map plus labelled paths"""

    field: CostField
    map: SemanticMap
    paths: List[Tuple[str, Sequence[Cell], str]] = field(default_factory=list)
    cell_pixels: int = 8
    title: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


def field_intensity(cost_field: CostField) -> np.ndarray:
    """
    Max-normalized 8-bit intensity of phi, brighter meaning higher potential

    Args:
        cost_field: CostField

    Returns:
        np.ndarray: uint8 [row, col]; obstacle cells are 0, and an all-zero
            field renders uniformly 0
    """
    phi = np.asarray(cost_field.phi, dtype=np.float64)
    finite = np.isfinite(phi)
    phi_max = cost_field.phi_max
    intensity = np.zeros(phi.shape, dtype=np.uint8)
    if phi_max > 0:
        intensity[finite] = np.rint(255.0 * phi[finite] / phi_max).astype(np.uint8)
    return intensity


def _num(value: float) -> str:
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-0") else "0"


def _check_spec(spec: RenderSpec):
    if spec.field.phi.size == 0 or spec.map.width == 0 or spec.map.height == 0:
        raise RenderError("empty_map", "nothing to render on a zero-size map")
    if spec.cell_pixels < 1:
        raise RenderError("invalid_spec", "cell_pixels must be >= 1")
    if spec.field.phi.shape != (spec.map.height, spec.map.width):
        raise RenderError("invalid_spec", "field and map dimensions differ")
    for label, path, _ in spec.paths:
        for x, y in path:
            if not (0 <= x < spec.map.width and 0 <= y < spec.map.height):
                raise RenderError("invalid_spec", f"path '{label}' leaves the map at {(x, y)}")


def _heat_rects(intensity: np.ndarray, blocked: np.ndarray, cp: int) -> List[str]:
    # equal-intensity runs within a row become one rect
    rects = []
    height, width = intensity.shape
    for y in range(height):
        x = 0
        while x < width:
            if blocked[y, x]:
                x += 1
                continue
            value = int(intensity[y, x])
            run = x + 1
            while run < width and not blocked[y, run] and int(intensity[y, run]) == value:
                run += 1
            colour = f"#{value:02x}{value:02x}{value:02x}"
            rects.append(
                f'<rect x="{x * cp}" y="{y * cp}" width="{(run - x) * cp}" height="{cp}" fill="{colour}"/>'
            )
            x = run
    return rects


def _obstacle_rects(semantic_map: SemanticMap, cp: int) -> List[str]:
    rects = []
    for index, obstacle in enumerate(semantic_map.classes):
        colour = CLASS_COLOURS[index % len(CLASS_COLOURS)]
        rects.append(f'<g id="class-{escape(obstacle.name)}" fill="{colour}">')
        for x, y in sorted(obstacle.cells, key=lambda c: (c[1], c[0])):
            rects.append(f'<rect x="{x * cp}" y="{y * cp}" width="{cp}" height="{cp}"/>')
        rects.append("</g>")
    return rects


def _polyline(path: Sequence[Cell], colour: str, cp: int) -> str:
    points = " ".join(f"{_num((x + 0.5) * cp)},{_num((y + 0.5) * cp)}" for x, y in path)
    width = _num(max(1.0, cp / 3))
    return f'<polyline points="{points}" fill="none" stroke="{colour}" stroke-width="{width}"/>'


def render_svg(spec: RenderSpec) -> bytes:
    """
    SVG 1.1 overlay figure

    Args:
        spec: RenderSpec

    Returns:
        bytes: UTF-8 SVG document; phi_max and the metadata are written into
            the <desc> element
    """
    _check_spec(spec)
    cp = spec.cell_pixels
    semantic_map = spec.map
    width_px = semantic_map.width * cp
    grid_px = semantic_map.height * cp
    legend_rows = len(semantic_map.classes) + len(spec.paths) + (1 if spec.title else 0)
    height_px = grid_px + LEGEND_ROW * legend_rows + (4 if legend_rows else 0)

    description = {"phi_max": spec.field.phi_max, **spec.metadata}
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width_px}" height="{height_px}" '
        f'viewBox="0 0 {width_px} {height_px}">',
        f"<desc>{escape(orjson.dumps(description, option=orjson.OPT_SORT_KEYS).decode())}</desc>",
        f'<rect x="0" y="0" width="{width_px}" height="{height_px}" fill="#ffffff"/>',
        '<g id="field">',
    ]
    lines += _heat_rects(field_intensity(spec.field), semantic_map.obstacle_mask, cp)
    lines.append("</g>")
    lines += _obstacle_rects(semantic_map, cp)

    lines.append('<g id="paths">')
    for label, path, colour in spec.paths:
        if path:
            lines.append(_polyline(path, colour, cp))
    lines.append("</g>")

    lines.append('<g id="legend" font-family="monospace" font-size="12">')
    y = grid_px + LEGEND_ROW
    if spec.title:
        lines.append(f'<text x="4" y="{y - 4}" fill="#000000">{escape(spec.title)}</text>')
        y += LEGEND_ROW
    for index, obstacle in enumerate(semantic_map.classes):
        colour = CLASS_COLOURS[index % len(CLASS_COLOURS)]
        lam = spec.field.lambda_scaled.get(obstacle.name, 0.0)
        lines.append(f'<rect x="4" y="{y - 12}" width="10" height="10" fill="{colour}"/>')
        lines.append(
            f'<text x="20" y="{y - 4}" fill="#000000">{escape(obstacle.name)} lambda={_num(lam)}</text>'
        )
        y += LEGEND_ROW
    for label, _, colour in spec.paths:
        lines.append(f'<rect x="4" y="{y - 8}" width="10" height="3" fill="{colour}"/>')
        lines.append(f'<text x="20" y="{y - 4}" fill="#000000">{escape(label)}</text>')
        y += LEGEND_ROW
    lines.append("</g>")
    lines.append("</svg>")

    return ("\n".join(lines) + "\n").encode("utf-8")


def render_pgm(spec: RenderSpec) -> bytes:
    """Grayscale P5 dump of the field (paths are not drawn)"""
    _check_spec(spec)
    intensity = field_intensity(spec.field)
    if spec.cell_pixels > 1:
        intensity = np.kron(intensity, np.ones((spec.cell_pixels, spec.cell_pixels), dtype=np.uint8))
    return export_to_pgm(intensity, comment=f"phi_max={_num(spec.field.phi_max)}")


def render_overlay(spec: RenderSpec, fmt: str = "svg") -> bytes:
    """
    Render a RenderSpec

    Args:
        spec: RenderSpec
        fmt: 'svg' (default) or 'pgm'

    Returns:
        bytes: image document
    """
    if fmt == "svg":
        data = render_svg(spec)
    elif fmt == "pgm":
        data = render_pgm(spec)
    else:
        raise RenderError("invalid_spec", f"unknown image format '{fmt}'")

    logger.debug("rendered %s (%d bytes)", fmt, len(data))
    return data


def default_path_colour(index: int) -> str:
    return PATH_COLOURS[index % len(PATH_COLOURS)]
