"""Pinhole reprojection from target pixel + disparity to source pixel coordinates.

The warp is the usual back-project / rigid transform / project chain. With
``s = scale * d + offset`` (metric inverse depth) and the back-projected ray
``q = R @ K^-1 @ (u, v, 1)``, the source coordinates reduce to a linear
fractional map in ``s``::

    x' = fx * (qx + tx * s) / (qz + tz * s) + cx
    y' = fy * (qy + ty * s) / (qz + tz * s) + cy

which gives closed forms for the first and second derivatives with respect to
the normalized disparity ``d``. For rigs with ``tz = 0`` the map is affine in
``d`` and the second derivative vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraRig, DepthConvention, InvalidParameter

__all__ = [
    "NonPositiveSourceDepth",
    "PixelCoord",
    "ReprojJacobian",
    "ReprojectionField",
    "reproject",
    "reproject_jacobian",
]

#: Minimum admissible source-frame depth in scene units.
MIN_SOURCE_DEPTH = 1e-6


class NonPositiveSourceDepth(RuntimeError):
    """The transformed point lies at or behind the source camera plane."""


@dataclass(frozen=True)
class PixelCoord:
    """Continuous pixel coordinates; x runs along width, y along height."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidParameter(f"pixel coordinates must be finite, got {self}")


@dataclass(frozen=True)
class ReprojJacobian:
    """d(source coords)/d(disparity) in pixels per unit normalized disparity."""

    dx_dd: float
    dy_dd: float


class ReprojectionField:
    """Reprojection of a fixed set of target pixels through one rig.

    Precomputes the rotated rays ``q`` once so repeated warps at different
    disparities only pay for the rational map. All methods broadcast over the
    shape of the pixel arrays given at construction.
    """

    def __init__(self, rig: CameraRig, conv: DepthConvention, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rx = (x - rig.cx) / rig.fx
        ry = (y - rig.cy) / rig.fy
        r = rig.rotation
        self.qx = r[0, 0] * rx + r[0, 1] * ry + r[0, 2]
        self.qy = r[1, 0] * rx + r[1, 1] * ry + r[1, 2]
        self.qz = r[2, 0] * rx + r[2, 1] * ry + r[2, 2]
        self.rig = rig
        self.conv = conv

    def _denominator(self, d):
        s = self.conv.scale * np.asarray(d, dtype=np.float64) + self.conv.offset
        den = self.qz + self.rig.translation[2] * s
        return s, den

    def warp(self, d):
        """Source coordinates and validity mask at disparities ``d``.

        Returns ``(x, y, valid)``; entries with source depth <= MIN_SOURCE_DEPTH
        are flagged invalid and carry unusable coordinates.
        """
        tx, ty, _tz = self.rig.translation
        s, den = self._denominator(d)
        valid = den > MIN_SOURCE_DEPTH * s  # source depth = den / s, s > 0
        safe = np.where(valid, den, 1.0)
        xs = self.rig.fx * (self.qx + tx * s) / safe + self.rig.cx
        ys = self.rig.fy * (self.qy + ty * s) / safe + self.rig.cy
        return xs, ys, valid

    def source_depth(self, d):
        s, den = self._denominator(d)
        return den / s

    def jacobian(self, d):
        """Analytic (dx/dd, dy/dd) at disparities ``d``."""
        tx, ty, tz = self.rig.translation
        a = self.conv.scale
        _s, den = self._denominator(d)
        den2 = den * den
        jx = a * self.rig.fx * (tx * self.qz - tz * self.qx) / den2
        jy = a * self.rig.fy * (ty * self.qz - tz * self.qy) / den2
        return jx, jy

    def curvature(self, d):
        """Analytic (d2x/dd2, d2y/dd2); zero whenever tz = 0."""
        tz = self.rig.translation[2]
        a = self.conv.scale
        _s, den = self._denominator(d)
        jx, jy = self.jacobian(d)
        factor = -2.0 * a * tz / den
        return factor * jx, factor * jy


def _check_disparity(d: float) -> None:
    if not np.isfinite(d) or not 0.0 < d < 1.0:
        raise InvalidParameter(f"disparity must lie in (0,1), got {d}")


def reproject(
    p: PixelCoord, d: float, rig: CameraRig, conv: DepthConvention
) -> PixelCoord:
    """Warp a single target pixel at disparity ``d`` into the source view.

    The returned coordinates may lie outside the image bounds; callers decide
    how to handle that. Raises :class:`NonPositiveSourceDepth` when the
    transformed point does not lie strictly in front of the source camera.
    """
    _check_disparity(d)
    field = ReprojectionField(rig, conv, p.x, p.y)
    xs, ys, valid = field.warp(d)
    if not valid:
        raise NonPositiveSourceDepth(
            f"pixel ({p.x}, {p.y}) at disparity {d} maps behind the source camera"
        )
    return PixelCoord(float(xs), float(ys))


def reproject_jacobian(
    p: PixelCoord, d: float, rig: CameraRig, conv: DepthConvention
) -> ReprojJacobian:
    """Derivative of :func:`reproject` with respect to normalized disparity."""
    _check_disparity(d)
    field = ReprojectionField(rig, conv, p.x, p.y)
    _xs, _ys, valid = field.warp(d)
    if not valid:
        raise NonPositiveSourceDepth(
            f"pixel ({p.x}, {p.y}) at disparity {d} maps behind the source camera"
        )
    jx, jy = field.jacobian(d)
    return ReprojJacobian(float(jx), float(jy))
