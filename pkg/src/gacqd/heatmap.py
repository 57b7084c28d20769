"""Hand-rolled SVG heatmaps of 2-D archives.

Fitness is color-mapped over the descriptor grid (a small viridis-like ramp,
linearly interpolated). The writer emits plain rects with deterministic
formatting, so identical archives give byte-identical files; header lines go
in as XML comments.
"""

from .archive import Archive, axis_indices
from .errors import ShapeError

# viridis anchors (r, g, b), dark blue -> yellow
_RAMP = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
         (253, 231, 37))


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    frac = pos - i
    r, g, b = (round(a + (b2 - a) * frac) for a, b2 in zip(_RAMP[i], _RAMP[i + 1]))
    return f"#{r:02x}{g:02x}{b:02x}"


def render_svg(archive: Archive, path, header_lines=(), cell_px: int = 12,
               title: str | None = None) -> None:
    """Write the archive as an SVG grid; only 2-D descriptor grids render."""
    spec = archive.spec
    if len(spec.dims) != 2:
        raise ShapeError("SVG heatmaps are only defined for 2-D grids; "
                         "higher-dimensional archives dump CSV only")
    nx, ny = spec.dims
    width, height = nx * cell_px, ny * cell_px
    fits = [e.fitness for e in archive.cells.values()]
    lo = min(fits) if fits else 0.0
    hi = max(fits) if fits else 1.0
    span = hi - lo if hi > lo else 1.0
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height + (18 if title else 0)}">']
    for text in header_lines:
        lines.append(f"<!-- {text} -->")
    if title:
        lines.append(f'<text x="2" y="12" font-size="11" '
                     f'font-family="monospace">{title}</text>')
    y_off = 18 if title else 0
    lines.append(f'<rect x="0" y="{y_off}" width="{width}" height="{height}" '
                 f'fill="#e8e8e8"/>')
    for cell in sorted(archive.cells):
        ix, iy = axis_indices(spec, cell)
        fitness = archive.cells[cell].fitness
        color = _color((fitness - lo) / span)
        x = ix * cell_px
        y = y_off + (ny - 1 - iy) * cell_px  # axis 1 grows upward
        lines.append(f'<rect x="{x}" y="{y}" width="{cell_px}" '
                     f'height="{cell_px}" fill="{color}"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
