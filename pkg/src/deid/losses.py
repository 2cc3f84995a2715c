"""Every term of the training objective.

All norms are mean-reduced (per element), which keeps the weights
resolution-independent. Weighted combination applies each weight exactly
once, in compound_loss; the individual term functions return raw values.
"""

from dataclasses import dataclass, fields

import torch

from deid.errors import DescriptorMismatchError, LossNotFinite, MaskRangeError, ShapeError
from deid.geometry import spatial_gradients


@dataclass
class LossWeights:
    alpha0: float = 0.5
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 0.5
    alpha4: float = 3e-3
    alpha5: float = 1e-2
    lambda_id: float = 2e-6
    mixup_alpha: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ShapeError(f"loss weight {f.name} must be >= 0")


@dataclass
class MixupSample:
    delta_mx: torch.Tensor
    lambda_beta: float


@dataclass
class LossReport:
    """Raw per-term values plus the weighted total. l_d is the
    discriminator's own objective and is reported, not part of the total."""

    l_g: float = 0.0
    l_d: float = 0.0
    l_r_raw: float = 0.0
    l_r_masked: float = 0.0
    l_x_raw: float = 0.0
    l_y_raw: float = 0.0
    l_x_masked: float = 0.0
    l_y_masked: float = 0.0
    l_p_raw: float = 0.0
    l_p_masked: float = 0.0
    l_m: float = 0.0
    l_m_x: float = 0.0
    l_m_y: float = 0.0
    l_r_low: float = 0.0
    total: float = 0.0

    @classmethod
    def csv_header(cls):
        return ",".join(f.name for f in fields(cls))

    def csv_row(self):
        return ",".join(f"{getattr(self, f.name):.6g}" for f in fields(self))


def _check_same_shape(z, x, what):
    if z.shape != x.shape:
        raise ShapeError(f"{what}: shapes differ, {tuple(z.shape)} vs {tuple(x.shape)}")


def reconstruction_l1(z, x):
    _check_same_shape(z, x, "reconstruction_l1")
    return (z - x).abs().mean()


def edge_loss(z, x):
    """Mean absolute difference of forward-difference derivatives per axis."""
    _check_same_shape(z, x, "edge_loss")
    zdx, zdy = spatial_gradients(z)
    xdx, xdy = spatial_gradients(x)
    return (zdx - xdx).abs().mean(), (zdy - xdy).abs().mean()


def mask_regularizers(m):
    """(mean value, mean |d/dx|, mean |d/dy|) of a mask in [0,1]."""
    lo, hi = float(m.detach().min()), float(m.detach().max())
    if lo < 0.0 or hi > 1.0:
        raise MaskRangeError(f"mask outside [0,1]: min={lo} max={hi}")
    mdx, mdy = spatial_gradients(m)
    return m.mean(), mdx.abs().mean(), mdy.abs().mean()


def perceptual_loss(px, pt, pz, lambda_id):
    """Attract pz to the source at scales a1-a3 and to the target at a4;
    repel pz's embedding from the target's with weight lambda_id. Each term
    is a mean absolute difference."""
    if not (px.model_id == pt.model_id == pz.model_id):
        raise DescriptorMismatchError(
            f"pyramid mismatch: {px.model_id} / {pt.model_id} / {pz.model_id}"
        )
    attract = (
        (px.a1 - pz.a1).abs().mean()
        + (px.a2 - pz.a2).abs().mean()
        + (px.a3 - pz.a3).abs().mean()
        + (pt.a4 - pz.a4).abs().mean()
    )
    repel = (pt.embedding - pz.embedding).abs().mean()
    return attract - lambda_id * repel


def mixup_pair(x, z_masked, rng, mixup_alpha=0.2, lambda_beta=None):
    """Convex combination of the real image and the generated one with a
    Beta-sampled coefficient. A forced lambda_beta skips sampling (tests)."""
    _check_same_shape(z_masked, x, "mixup_pair")
    if lambda_beta is None:
        lambda_beta = float(rng.beta(mixup_alpha, mixup_alpha))
    delta = lambda_beta * x + (1.0 - lambda_beta) * z_masked
    return MixupSample(delta_mx=delta, lambda_beta=lambda_beta)


def gan_losses(d, sample):
    """Least-squares objectives on the mixup sample: the discriminator is
    pushed toward lambda_beta (the real fraction), the generator toward
    1 - lambda_beta. The discriminator sees a detached copy for its own loss
    so gan_losses can be evaluated in one call."""
    score_d = d(sample.delta_mx.detach())
    score_g = d(sample.delta_mx)
    l_d = ((score_d - sample.lambda_beta) ** 2).mean()
    l_g = ((score_g - (1.0 - sample.lambda_beta)) ** 2).mean()
    return l_d, l_g


def weighted_sum(get, w):
    """The compound objective; works on floats and on tensors. `get` maps a
    term name to its value (0 for absent terms). l_r_low rides on alpha1 (it
    is the low-resolution copy of the reconstruction term)."""
    return (
        w.alpha0 * get("l_g")
        + w.alpha1 * (get("l_r_raw") + get("l_r_masked") + get("l_r_low"))
        + w.alpha2 * (get("l_x_raw") + get("l_y_raw") + get("l_x_masked") + get("l_y_masked"))
        + w.alpha3 * (get("l_p_raw") + get("l_p_masked"))
        + w.alpha4 * get("l_m")
        + w.alpha5 * (get("l_m_x") + get("l_m_y"))
    )


def compound_loss(parts, w):
    """Fill in parts.total as the weighted sum of the raw terms, each alpha
    applied exactly once. Raises LossNotFinite naming the first bad term."""
    for f in fields(parts):
        v = getattr(parts, f.name)
        if v != v or v in (float("inf"), float("-inf")):
            raise LossNotFinite(f"loss term {f.name} is not finite: {v}")
    parts.total = float(weighted_sum(lambda k: getattr(parts, k), w))
    return parts
