"""First-order propagation of Gaussian disparity components to color space.

A component ``D ~ N(mu, var)`` pushed through a differentiable scalar map f is
approximated as ``N(f(mu), f'(mu)^2 var)``; exact when f is affine. For the
composite disparity -> source position -> color map the chain derivative per
channel is ``grad_C . (dx/dd, dy/dd)`` evaluated at the warped mean, so the
color variance costs one extra multiply per channel. A seeded Monte Carlo
oracle of the same composite map is provided for validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraRig, DepthConvention, GaussianRV, ImageGrid, InvalidParameter
from .geometry import PixelCoord, ReprojectionField
from .sampling import sample_grid

__all__ = ["ColorDistribution", "push_through", "propagate_color", "mc_color_oracle"]


@dataclass(frozen=True)
class ColorDistribution:
    """Per-channel color mean and variance; flagged when the warp is unusable."""

    mean: np.ndarray
    var: np.ndarray
    out_of_bounds: bool = False

    def __post_init__(self) -> None:
        if not self.out_of_bounds and np.any(np.asarray(self.var) < 0.0):
            raise InvalidParameter(f"color variance must be >= 0, got {self.var}")


def push_through(f_value: float, f_deriv: float, rv: GaussianRV) -> GaussianRV:
    """Delta-method image of ``rv`` under a map with the given value and slope."""
    return GaussianRV(mean=float(f_value), var=float(f_deriv * f_deriv * rv.var))


def propagate_color(
    m_component: GaussianRV,
    p: PixelCoord,
    rig: CameraRig,
    conv: DepthConvention,
    src: ImageGrid,
) -> ColorDistribution:
    """Color distribution of one disparity component warped into ``src``.

    The mean is the bilinearly sampled color at the warped mean disparity; the
    per-channel variance is ``(grad_C . J)^2 * var``. Invalid warps (behind the
    source camera) and out-of-bounds samples come back flagged rather than
    raised so callers can mask the pixel.
    """
    if not 0.0 < m_component.mean < 1.0:
        raise InvalidParameter(
            f"component mean must lie in (0,1), got {m_component.mean}"
        )
    field = ReprojectionField(rig, conv, p.x, p.y)
    xs, ys, valid = field.warp(m_component.mean)
    if not valid:
        c = src.channels
        return ColorDistribution(np.zeros(c), np.zeros(c), out_of_bounds=True)
    value, gx, gy, _gxy, oob = sample_grid(src.data, xs, ys)
    jx, jy = field.jacobian(m_component.mean)
    deriv = gx * jx + gy * jy
    return ColorDistribution(
        mean=value, var=deriv * deriv * m_component.var, out_of_bounds=bool(oob)
    )


def mc_color_oracle(
    m_component: GaussianRV,
    p: PixelCoord,
    rig: CameraRig,
    conv: DepthConvention,
    src: ImageGrid,
    n_samples: int,
    seed: int,
) -> ColorDistribution:
    """Empirical color distribution over seeded draws of the disparity.

    Draws are clipped into the open unit interval ((1e-6, 1-1e-6)) so every
    sample stays a legal disparity; at the variance scales this oracle is used
    for, clipping is a measure-zero correction. Deterministic given the seed.
    Sample variance uses the n-1 normalization.
    """
    if n_samples < 1000:
        raise InvalidParameter(f"need at least 1000 samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    draws = rng.normal(m_component.mean, m_component.std, size=n_samples)
    draws = np.clip(draws, 1e-6, 1.0 - 1e-6)
    field = ReprojectionField(rig, conv, p.x, p.y)
    xs, ys, valid = field.warp(draws)
    if not np.all(valid):
        raise InvalidParameter("a Monte Carlo draw mapped behind the source camera")
    values, _gx, _gy, _gxy, oob = sample_grid(src.data, xs, ys)
    return ColorDistribution(
        mean=values.mean(axis=0),
        var=values.var(axis=0, ddof=1),
        out_of_bounds=bool(np.any(oob)),
    )
