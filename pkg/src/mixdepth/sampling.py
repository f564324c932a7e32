"""Bilinear color interpolation with exact in-cell spatial derivatives.

Within the cell anchored at integer corner (x0, y0) the interpolant is

    C(x, y) = (1-tx)(1-ty) C00 + tx (1-ty) C10 + (1-tx) ty C01 + tx ty C11

with tx = x - x0, ty = y - y0, C10 the corner one step in +x and C01 one step
in +y. The partials and the (constant per cell) mixed second derivative follow
directly from that form. Coordinates outside [0, w-1] x [0, h-1] are clamped
to the border and flagged; exact cell boundaries resolve to the cell on the
greater side (right-continuous), except at the far border where only the last
cell exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageGrid, InvalidParameter
from .geometry import PixelCoord

__all__ = ["ColorSample", "bilinear_sample", "sample_grid"]


@dataclass(frozen=True)
class ColorSample:
    """Interpolated color with its spatial gradient, one entry per channel."""

    value: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    out_of_bounds: bool


def sample_grid(data: np.ndarray, x, y):
    """Vectorized bilinear sampling of ``data`` (h, w, c) at continuous (x, y).

    Returns ``(value, grad_x, grad_y, grad_xy, out_of_bounds)`` where the first
    four have shape ``x.shape + (c,)`` and ``grad_xy`` is the mixed second
    derivative of the interpolant (needed when differentiating the sampled
    gradient along a warp). Out-of-range coordinates are clamped to the border.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = data.shape[0], data.shape[1]
    if h < 2 or w < 2:
        raise InvalidParameter("bilinear sampling needs at least a 2x2 image")

    oob = (x < 0.0) | (x > w - 1.0) | (y < 0.0) | (y > h - 1.0)
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(yc), h - 2).astype(np.intp)
    tx = (xc - x0)[..., None]
    ty = (yc - y0)[..., None]

    c00 = data[y0, x0]
    c10 = data[y0, x0 + 1]
    c01 = data[y0 + 1, x0]
    c11 = data[y0 + 1, x0 + 1]

    value = (
        (1.0 - tx) * (1.0 - ty) * c00
        + tx * (1.0 - ty) * c10
        + (1.0 - tx) * ty * c01
        + tx * ty * c11
    )
    grad_x = (1.0 - ty) * (c10 - c00) + ty * (c11 - c01)
    grad_y = (1.0 - tx) * (c01 - c00) + tx * (c11 - c10)
    grad_xy = c00 - c10 - c01 + c11
    return value, grad_x, grad_y, grad_xy, oob


def bilinear_sample(img: ImageGrid, p: PixelCoord) -> ColorSample:
    """Sample one continuous coordinate; clamps at borders and flags it."""
    value, gx, gy, _gxy, oob = sample_grid(img.data, p.x, p.y)
    return ColorSample(value=value, grad_x=gx, grad_y=gy, out_of_bounds=bool(oob))
