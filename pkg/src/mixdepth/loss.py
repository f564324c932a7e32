"""Photometric error distributions, competitive weights, and loss terms.

The per-pixel photometric error is the usual weighted SSIM + L1 form,

    E = lambda_ssim * (1 - SSIM) / 2 + lambda_l1 * L1

with SSIM computed per channel on a 3x3 block-mean window (stabilizers
C1 = 0.01^2, C2 = 0.03^2) and both terms averaged over channels. Error
variance comes from linearizing E in the predicted center-pixel color only,
holding the other window pixels fixed: var_E = sum_ch (dE/dc)^2 * var_ch.

Because the error *standard deviation* appears inside the spread-matching
loss term, differentiating the full objective needs d(dE/dc)/d(neighbor
colors), i.e. second partials of SSIM with one leg pinned at the window
center. :class:`SsimReference` computes the value, the nine first partials,
and those nine second partials as whole-image maps so the trainer can run the
chain rule without automatic differentiation.

Competitive weights follow from the probability that one component's error
(both errors treated as Gaussians) undercuts the other's, which reduces to a
single standard normal CDF of the mean gap over the combined spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import ImageGrid, InvalidParameter
from .propagation import ColorDistribution

__all__ = [
    "SSIM_C1",
    "SSIM_C2",
    "ErrorDistribution",
    "CompetitiveWeights",
    "LossTerms",
    "LossBreakdown",
    "SsimReference",
    "photometric_error",
    "error_and_color_gradient",
    "photometric_error_map",
    "competitive_weights",
    "competitive_weight_maps",
    "loss_terms",
    "loss_terms_gradient",
    "min_over_sources",
    "static_pixel_mask",
    "smoothness",
    "smoothness_with_grad",
]

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

#: Window offsets in (dy, dx) order; index 4 is the center.
OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]
CENTER = 4


def _shift(m: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[y, x] = m[y + dy, x + dx], zero where that falls outside."""
    h, w = m.shape[0], m.shape[1]
    out = np.zeros_like(m)
    ys_out = slice(max(0, -dy), h - max(0, dy))
    xs_out = slice(max(0, -dx), w - max(0, dx))
    ys_in = slice(max(0, dy), h - max(0, -dy))
    xs_in = slice(max(0, dx), w - max(0, -dx))
    out[ys_out, xs_out] = m[ys_in, xs_in]
    return out


def _box3(m: np.ndarray) -> np.ndarray:
    """3x3 block mean; exact on the interior, zero-padded reads at the border."""
    acc = np.zeros_like(m)
    for dy, dx in OFFSETS:
        acc += _shift(m, dy, dx)
    return acc / 9.0


def interior_mask(height: int, width: int) -> np.ndarray:
    """Pixels whose 3x3 window lies fully inside the image."""
    m = np.zeros((height, width), dtype=bool)
    m[1:-1, 1:-1] = True
    return m


@dataclass
class SsimStats:
    """SSIM maps against a fixed reference image, per channel.

    ``value`` has shape (h, w, c). ``d[o]`` is the partial of the SSIM at each
    pixel with respect to the predicted color at window offset ``OFFSETS[o]``;
    ``dd_center[o]`` is the second partial with one leg at the window center.
    Entries outside the interior are meaningless.
    """

    value: np.ndarray
    d: np.ndarray
    dd_center: np.ndarray | None


class SsimReference:
    """Target-side SSIM precomputation reused across predicted images."""

    def __init__(self, target: np.ndarray):
        target = np.asarray(target, dtype=np.float64)
        if target.ndim != 3:
            raise InvalidParameter("target must have shape (h, w, c)")
        self.target = target
        self.mu_y = _box3(target)
        self.vy = _box3(target * target) - self.mu_y ** 2
        self.t_shifted = [_shift(target, dy, dx) for dy, dx in OFFSETS]
        # dB_o and the center instances are pure target quantities
        self.dB = [(2.0 / 9.0) * (t_o - self.mu_y) for t_o in self.t_shifted]

    def stats(self, pred: np.ndarray, second: bool = False) -> SsimStats:
        t = self.target
        mu_x = _box3(pred)
        vx = _box3(pred * pred) - mu_x ** 2
        cxy = _box3(pred * t) - mu_x * self.mu_y

        a_map = 2.0 * mu_x * self.mu_y + SSIM_C1
        b_map = 2.0 * cxy + SSIM_C2
        p_map = mu_x ** 2 + self.mu_y ** 2 + SSIM_C1
        q_map = vx + self.vy + SSIM_C2
        inv_p = 1.0 / p_map
        inv_q = 1.0 / q_map
        inv_pq = inv_p * inv_q
        value = a_map * b_map * inv_pq

        dA = (2.0 / 9.0) * self.mu_y
        dP = (2.0 / 9.0) * mu_x
        aP = dP * inv_p

        pred_shifted = [_shift(pred, dy, dx) for dy, dx in OFFSETS]
        dQ = [(2.0 / 9.0) * (w_o - mu_x) for w_o in pred_shifted]

        d = np.empty((9,) + pred.shape, dtype=np.float64)
        f_terms = []
        bQ = []
        for o in range(9):
            f_o = dA * b_map + a_map * self.dB[o]
            b_o = dQ[o] * inv_q
            d[o] = f_o * inv_pq - value * (aP + b_o)
            f_terms.append(f_o)
            bQ.append(b_o)

        dd_center = None
        if second:
            dB_c = self.dB[CENTER]
            bQ_c = bQ[CENTER]
            s_c = d[CENTER]
            ddP_term = (2.0 / 81.0) * inv_p - aP * aP
            dd_center = np.empty_like(d)
            for o in range(9):
                ddQ_o = (2.0 / 9.0) * ((1.0 if o == CENTER else 0.0) - 1.0 / 9.0)
                dd_center[o] = (
                    dA * (dB_c + self.dB[o]) * inv_pq
                    - f_terms[o] * inv_pq * (aP + bQ_c)
                    - s_c * (aP + bQ[o])
                    - value * (ddP_term + ddQ_o * inv_q - bQ[o] * bQ_c)
                )
        return SsimStats(value=value, d=d, dd_center=dd_center)


@dataclass(frozen=True)
class ErrorDistribution:
    """Gaussian summary of the photometric error for one mixture component."""

    mean: float
    var: float
    masked: bool = False

    def __post_init__(self) -> None:
        if self.masked:
            return
        if not (math.isfinite(self.mean) and math.isfinite(self.var)):
            raise InvalidParameter(f"error distribution must be finite, got {self}")
        if self.var < 0.0:
            raise InvalidParameter(f"error variance must be >= 0, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)


@dataclass(frozen=True)
class CompetitiveWeights:
    """Probabilities that each component has the lower error; they sum to one."""

    w1: float
    w2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.w1 <= 1.0 and 0.0 <= self.w2 <= 1.0):
            raise InvalidParameter(f"weights must lie in [0,1], got {self}")
        if abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise InvalidParameter(f"weights must sum to 1, got {self}")


@dataclass(frozen=True)
class LossTerms:
    """Per-pixel loss contributions; ``selected`` is the rounded-weight pick."""

    l_mu: float
    l_sigma: float
    l_alpha: float
    selected: int


@dataclass(frozen=True)
class LossBreakdown:
    l_mu: float
    l_sigma: float
    l_alpha: float
    l_smooth: float
    total: float
    valid_pixel_count: int


def _as_patch(patch) -> np.ndarray:
    if isinstance(patch, ImageGrid):
        patch = patch.data
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        patch = patch[:, :, None]
    if patch.shape[:2] != (3, 3):
        raise InvalidParameter(f"expected a 3x3 window, got shape {patch.shape}")
    return patch


def error_and_color_gradient(
    pred_mean: np.ndarray,
    target_patch,
    lambda_ssim: float = 0.85,
    lambda_l1: float = 0.15,
    pred_patch=None,
):
    """Photometric error of one pixel and its derivative in the center color.

    ``pred_mean`` is the predicted center color (one value per channel). When
    ``pred_patch`` is omitted the predicted window is the constant broadcast of
    ``pred_mean``; otherwise its center entry is replaced by ``pred_mean``.
    Returns ``(error, grad)`` with ``grad[ch] = dE/d pred_mean[ch]`` holding
    every other window pixel fixed. The L1 subderivative at zero is taken as 0.
    """
    if lambda_ssim < 0.0 or lambda_l1 < 0.0:
        raise InvalidParameter("loss weights must be >= 0")
    target = _as_patch(target_patch)
    pred_mean = np.asarray(pred_mean, dtype=np.float64).reshape(-1)
    c = target.shape[2]
    if pred_mean.shape[0] != c:
        raise InvalidParameter(
            f"pred has {pred_mean.shape[0]} channels, target has {c}"
        )
    if pred_patch is None:
        patch = np.broadcast_to(pred_mean, (3, 3, c)).copy()
    else:
        patch = _as_patch(pred_patch).copy()
        patch[1, 1] = pred_mean

    stats = SsimReference(target).stats(patch)
    s_val = stats.value[1, 1]
    ds_center = stats.d[CENTER][1, 1]
    diff = pred_mean - target[1, 1]
    error = (
        lambda_ssim * (1.0 - s_val.mean()) / 2.0 + lambda_l1 * np.abs(diff).mean()
    )
    grad = -lambda_ssim / (2.0 * c) * ds_center + lambda_l1 / c * np.sign(diff)
    return float(error), grad


def photometric_error(
    pred: ColorDistribution,
    target_patch,
    lambda_ssim: float = 0.85,
    lambda_l1: float = 0.15,
    pred_patch=None,
) -> ErrorDistribution:
    """Error distribution of a predicted color against a 3x3 target window.

    The variance is the squared center-color sensitivity of the error times
    the predicted color variance, summed over channels (channels independent).
    A masked prediction yields a masked error.
    """
    if pred.out_of_bounds:
        return ErrorDistribution(0.0, 0.0, masked=True)
    error, grad = error_and_color_gradient(
        pred.mean, target_patch, lambda_ssim, lambda_l1, pred_patch
    )
    var = float(np.sum(grad * grad * np.asarray(pred.var)))
    return ErrorDistribution(error, var)


def photometric_error_map(
    pred_img: np.ndarray,
    target,
    lambda_ssim: float = 0.85,
    lambda_l1: float = 0.15,
):
    """Per-pixel SSIM+L1 error between two images of shape (h, w, c).

    Returns ``(error_map, valid)`` where ``valid`` marks interior pixels whose
    window fits inside the image. ``target`` may be a precomputed
    :class:`SsimReference` to amortize repeated evaluations.
    """
    ref = target if isinstance(target, SsimReference) else SsimReference(target)
    stats = ref.stats(pred_img)
    c = pred_img.shape[2]
    l1 = np.abs(pred_img - ref.target).mean(axis=2)
    err = lambda_ssim * (1.0 - stats.value.mean(axis=2)) / 2.0 + lambda_l1 * l1
    return err, interior_mask(pred_img.shape[0], pred_img.shape[1])


def competitive_weights(
    e1: ErrorDistribution, e2: ErrorDistribution
) -> CompetitiveWeights:
    """Probability that each component's error is the lower one.

    With both errors Gaussian the gap is Gaussian too, so
    ``w1 = Phi((mu2 - mu1) / sqrt(var1 + var2))``. Degenerate zero-variance
    pairs compare means directly; a masked component cedes all weight to the
    other; both masked is a caller error.
    """
    if e1.masked and e2.masked:
        raise InvalidParameter("cannot weight two masked components")
    if e1.masked:
        return CompetitiveWeights(0.0, 1.0)
    if e2.masked:
        return CompetitiveWeights(1.0, 0.0)
    total_var = e1.var + e2.var
    if total_var == 0.0:
        if e1.mean < e2.mean:
            w1 = 1.0
        elif e1.mean == e2.mean:
            w1 = 0.5
        else:
            w1 = 0.0
    else:
        w1 = float(ndtr((e2.mean - e1.mean) / math.sqrt(total_var)))
    return CompetitiveWeights(w1, 1.0 - w1)


def competitive_weight_maps(mu1, var1, valid1, mu2, var2, valid2):
    """Vectorized version of :func:`competitive_weights` over pixel maps.

    Returns ``w1`` with the same conventions: a pixel valid for only one
    component puts full weight on it; pixels valid for neither get 0.5 (they
    are excluded downstream anyway).
    """
    total_var = var1 + var2
    both = valid1 & valid2
    positive = both & (total_var > 0.0)
    z = np.zeros_like(mu1)
    np.divide(mu2 - mu1, np.sqrt(np.where(positive, total_var, 1.0)), out=z, where=positive)
    w1 = np.where(positive, ndtr(z), 0.5)
    degenerate = both & ~positive
    w1 = np.where(degenerate & (mu1 < mu2), 1.0, w1)
    w1 = np.where(degenerate & (mu1 > mu2), 0.0, w1)
    w1 = np.where(valid1 & ~valid2, 1.0, w1)
    w1 = np.where(valid2 & ~valid1, 0.0, w1)
    return w1


ALPHA_EPS = 1e-7


def loss_terms(
    e1: ErrorDistribution,
    e2: ErrorDistribution,
    w: CompetitiveWeights,
    alpha: float,
) -> LossTerms:
    """Per-pixel loss contributions for one pixel.

    The rounded weight selects exactly one component (ties go to component 2);
    its error mean feeds the accuracy term and its (std - mean) gap the spread
    term. The mixture weight is scored by cross-entropy against the
    competitive weights, with alpha clamped away from {0, 1} before the log.
    """
    if e1.masked and e2.masked:
        return LossTerms(0.0, 0.0, 0.0, selected=0)
    selected = 2 if w.w2 >= 0.5 else 1
    e_sel = e2 if selected == 2 else e1
    l_mu = e_sel.mean
    l_sigma = (e_sel.std - e_sel.mean) ** 2
    ac = min(max(alpha, ALPHA_EPS), 1.0 - ALPHA_EPS)
    l_alpha = -(w.w1 * math.log(1.0 - ac) + w.w2 * math.log(ac))
    return LossTerms(l_mu, l_sigma, l_alpha, selected)


def loss_terms_gradient(
    e1: ErrorDistribution,
    e2: ErrorDistribution,
    w: CompetitiveWeights,
    alpha: float,
    lambda_alpha: float = 0.1,
) -> dict:
    """Analytic gradient of ``l_mu + l_sigma + lambda_alpha * l_alpha``.

    Differentiates with respect to the error means, the log error standard
    deviations, and the alpha logit, with the competitive weights (and their
    rounding) treated as constants.
    """
    terms = loss_terms(e1, e2, w, alpha)
    grad = {
        "mu1": 0.0,
        "mu2": 0.0,
        "log_sigma1": 0.0,
        "log_sigma2": 0.0,
        "logit_alpha": 0.0,
    }
    for idx, e in ((1, e1), (2, e2)):
        if terms.selected != idx:
            continue
        gap = e.std - e.mean
        grad[f"mu{idx}"] = 1.0 - 2.0 * gap
        grad[f"log_sigma{idx}"] = 2.0 * gap * e.std
    ac = min(max(alpha, ALPHA_EPS), 1.0 - ALPHA_EPS)
    if ALPHA_EPS < alpha < 1.0 - ALPHA_EPS:
        d_alpha = w.w1 / (1.0 - ac) - w.w2 / ac
        grad["logit_alpha"] = lambda_alpha * d_alpha * ac * (1.0 - ac)
    return grad


def min_over_sources(errors: list[ErrorDistribution]) -> ErrorDistribution:
    """Entry with the smallest error mean among unmasked sources.

    Masked entries are skipped; if every source is masked the result is
    masked. Ties keep the earliest source for determinism.
    """
    if not errors:
        raise InvalidParameter("need at least one source")
    best = None
    for e in errors:
        if e.masked:
            continue
        if best is None or e.mean < best.mean:
            best = e
    if best is None:
        return ErrorDistribution(0.0, 0.0, masked=True)
    return best


def static_pixel_mask(warped_error: np.ndarray, identity_error: np.ndarray) -> np.ndarray:
    """True where warping beats the unwarped source (pixel is kept)."""
    warped_error = np.asarray(warped_error)
    identity_error = np.asarray(identity_error)
    if warped_error.shape != identity_error.shape:
        raise InvalidParameter(
            f"shape mismatch {warped_error.shape} vs {identity_error.shape}"
        )
    return warped_error < identity_error


SMOOTH_NORM_EPS = 1e-7


def _image_gradient_weights(image: np.ndarray):
    gx = np.abs(np.diff(image, axis=1)).mean(axis=2)
    gy = np.abs(np.diff(image, axis=0)).mean(axis=2)
    return np.exp(-gx), np.exp(-gy)


def smoothness(mu_map, image) -> float:
    """Edge-aware first-order smoothness of a disparity map.

    The map is normalized by its own mean, forward differences are weighted by
    ``exp(-|image gradient|)`` (channel-averaged), and the result is the mean
    of both directional terms over all pixels.
    """
    value, _grad = smoothness_with_grad(mu_map, image)
    return value


def smoothness_with_grad(mu_map, image):
    """Smoothness value plus its exact gradient in the disparity map.

    The gradient includes the coupling through the global mean normalization,
    so finite differences of the value match it everywhere away from zero
    forward differences (where the subgradient 0 is used).
    """
    d = mu_map.plane() if isinstance(mu_map, ImageGrid) else np.asarray(mu_map, dtype=np.float64)
    img = image.data if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if d.shape != img.shape[:2]:
        raise InvalidParameter(f"shape mismatch {d.shape} vs {img.shape[:2]}")
    h, w = d.shape
    n = h * w
    wx, wy = _image_gradient_weights(img)
    m = d.mean() + SMOOTH_NORM_EPS
    dx = np.diff(d, axis=1)
    dy = np.diff(d, axis=0)
    raw = float(np.sum(np.abs(dx) * wx) + np.sum(np.abs(dy) * wy))
    value = raw / (m * n)

    sx = np.sign(dx) * wx
    sy = np.sign(dy) * wy
    grad_raw = np.zeros_like(d)
    grad_raw[:, 1:] += sx
    grad_raw[:, :-1] -= sx
    grad_raw[1:, :] += sy
    grad_raw[:-1, :] -= sy
    grad = (grad_raw / m - raw / (m * m * n)) / n
    return value, grad
