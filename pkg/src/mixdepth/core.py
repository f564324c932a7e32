"""Core value types shared across the pipeline.

Disparity here always means a normalized value in the open interval (0, 1),
mapped affinely to metric inverse depth by a :class:`DepthConvention`:

    1 / depth = scale * d + offset

with ``scale = 1/min_depth - 1/max_depth`` and ``offset = 1/max_depth``, so
``d -> 1`` approaches ``min_depth`` and ``d -> 0`` approaches ``max_depth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidParameter",
    "DepthConvention",
    "MixtureDisparity",
    "GaussianRV",
    "CameraRig",
    "ImageGrid",
    "disparity_to_depth",
    "disparity_to_depth_derivative",
    "depth_to_disparity",
    "mode_select",
]


class InvalidParameter(ValueError):
    """A value type was constructed from out-of-range or non-finite fields."""


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidParameter(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class DepthConvention:
    """Affine map between normalized disparity in (0,1) and metric inverse depth."""

    min_depth: float = 0.1
    max_depth: float = 100.0

    def __post_init__(self) -> None:
        _require_finite("depth bounds", self.min_depth, self.max_depth)
        if not 0.0 < self.min_depth < self.max_depth:
            raise InvalidParameter(
                f"need 0 < min_depth < max_depth, got ({self.min_depth}, {self.max_depth})"
            )

    @property
    def scale(self) -> float:
        return 1.0 / self.min_depth - 1.0 / self.max_depth

    @property
    def offset(self) -> float:
        return 1.0 / self.max_depth

    def inverse_depth(self, d):
        """Metric inverse depth for normalized disparity ``d`` (array friendly)."""
        return self.scale * np.asarray(d, dtype=np.float64) + self.offset


@dataclass(frozen=True)
class MixtureDisparity:
    """Per-pixel five-parameter mixture over normalized disparity.

    ``alpha`` is the weight of the second component; the first component
    carries weight ``1 - alpha``.
    """

    mu1: float
    mu2: float
    var1: float
    var2: float
    alpha: float

    def __post_init__(self) -> None:
        _require_finite(
            "mixture parameters", self.mu1, self.mu2, self.var1, self.var2, self.alpha
        )
        if not (0.0 < self.mu1 < 1.0 and 0.0 < self.mu2 < 1.0):
            raise InvalidParameter(f"means must lie in (0,1), got {self.mu1}, {self.mu2}")
        if self.var1 < 0.0 or self.var2 < 0.0:
            raise InvalidParameter(f"variances must be >= 0, got {self.var1}, {self.var2}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameter(f"alpha must lie in [0,1], got {self.alpha}")


@dataclass(frozen=True)
class GaussianRV:
    """A scalar normal random variable as a (mean, variance) pair."""

    mean: float
    var: float

    def __post_init__(self) -> None:
        _require_finite("gaussian parameters", self.mean, self.var)
        if self.var < 0.0:
            raise InvalidParameter(f"variance must be >= 0, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)


class CameraRig:
    """Pinhole intrinsics plus the rigid transform from target to source frame.

    A target-frame point ``P`` maps to the source frame as ``R @ P + t``.
    """

    __slots__ = ("fx", "fy", "cx", "cy", "rotation", "translation")

    def __init__(self, fx, fy, cx, cy, rotation, translation):
        _require_finite("intrinsics", fx, fy, cx, cy)
        if fx <= 0.0 or fy <= 0.0:
            raise InvalidParameter(f"focal lengths must be > 0, got fx={fx}, fy={fy}")
        rotation = np.array(rotation, dtype=np.float64)
        translation = np.array(translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3):
            raise InvalidParameter(f"rotation must be 3x3, got shape {rotation.shape}")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise InvalidParameter("rotation/translation must be finite")
        err = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if err > 1e-9:
            raise InvalidParameter(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        self.fx = float(fx)
        self.fy = float(fy)
        self.cx = float(cx)
        self.cy = float(cy)
        self.rotation = rotation
        self.translation = translation

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse(self) -> "CameraRig":
        """Rig for the reverse (source to target) transform, same intrinsics."""
        rt = self.rotation.T
        return CameraRig(self.fx, self.fy, self.cx, self.cy, rt, -rt @ self.translation)

    @classmethod
    def identity(cls, fx, fy, cx, cy) -> "CameraRig":
        return cls(fx, fy, cx, cy, np.eye(3), np.zeros(3))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"CameraRig(fx={self.fx}, fy={self.fy}, cx={self.cx}, cy={self.cy}, "
            f"t={self.translation.tolist()})"
        )


class ImageGrid:
    """Row-major scalar image, one or three channels, float64 throughout.

    Data is stored with shape ``(height, width, channels)``. Color images keep
    samples in [0,1]; depth grids hold positive scene units. The plain
    constructor only checks shape and finiteness; use :meth:`color` or
    :meth:`depth` to enforce the range conventions.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise InvalidParameter(
                f"image data must be (h, w) or (h, w, c) with c in {{1, 3}}, got {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidParameter(f"image must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameter("image data must be finite")
        self.data = np.ascontiguousarray(arr)

    @classmethod
    def color(cls, data) -> "ImageGrid":
        img = cls(data)
        lo, hi = img.data.min(), img.data.max()
        if lo < 0.0 or hi > 1.0:
            raise InvalidParameter(f"color samples must lie in [0,1], got [{lo}, {hi}]")
        return img

    @classmethod
    def depth(cls, data) -> "ImageGrid":
        img = cls(data)
        if img.channels != 1:
            raise InvalidParameter("depth grids are single channel")
        if img.data.min() <= 0.0:
            raise InvalidParameter("depth samples must be > 0")
        return img

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self) -> np.ndarray:
        """Single-channel view with the channel axis dropped."""
        if self.channels != 1:
            raise InvalidParameter("plane() requires a single-channel grid")
        return self.data[:, :, 0]


def disparity_to_depth(d: float, conv: DepthConvention) -> float:
    """Metric depth for a normalized disparity, strictly decreasing in ``d``."""
    _require_finite("disparity", d)
    if not 0.0 < d < 1.0:
        raise InvalidParameter(f"disparity must lie in (0,1), got {d}")
    return 1.0 / (conv.scale * d + conv.offset)


def disparity_to_depth_derivative(d: float, conv: DepthConvention) -> float:
    """d(depth)/d(disparity) of the map above."""
    _require_finite("disparity", d)
    if not 0.0 < d < 1.0:
        raise InvalidParameter(f"disparity must lie in (0,1), got {d}")
    s = conv.scale * d + conv.offset
    return -conv.scale / (s * s)


def depth_to_disparity(depth: float, conv: DepthConvention) -> float:
    """Inverse of :func:`disparity_to_depth`; requires depth within the bounds."""
    _require_finite("depth", depth)
    if not conv.min_depth < depth < conv.max_depth:
        raise InvalidParameter(
            f"depth {depth} outside ({conv.min_depth}, {conv.max_depth})"
        )
    return (1.0 / depth - conv.offset) / conv.scale


def mode_select(m: MixtureDisparity) -> float:
    """Most likely disparity by mixture weight: mu1 if alpha < 0.5, else mu2."""
    return m.mu1 if m.alpha < 0.5 else m.mu2
