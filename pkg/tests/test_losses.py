"""Loss terms against hand-computed oracles, weight bookkeeping, and the
mixup GAN objectives."""

import numpy as np
import pytest
import torch

from deid.descriptor import FacePyramid
from deid.errors import DescriptorMismatchError, LossNotFinite, MaskRangeError, ShapeError
from deid.losses import (
    LossReport,
    LossWeights,
    compound_loss,
    edge_loss,
    gan_losses,
    mask_regularizers,
    mixup_pair,
    perceptual_loss,
    reconstruction_l1,
    weighted_sum,
)

TERM_TO_ALPHA = {
    "l_g": "alpha0",
    "l_r_raw": "alpha1",
    "l_r_masked": "alpha1",
    "l_r_low": "alpha1",
    "l_x_raw": "alpha2",
    "l_y_raw": "alpha2",
    "l_x_masked": "alpha2",
    "l_y_masked": "alpha2",
    "l_p_raw": "alpha3",
    "l_p_masked": "alpha3",
    "l_m": "alpha4",
    "l_m_x": "alpha5",
    "l_m_y": "alpha5",
}


def test_reconstruction_l1_oracle():
    z = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    x = torch.tensor([[1.5, 2.0], [2.0, 6.0]])
    assert reconstruction_l1(z, x).item() == pytest.approx((0.5 + 0.0 + 1.0 + 2.0) / 4)
    with pytest.raises(ShapeError):
        reconstruction_l1(z, torch.zeros(3, 3))


def test_edge_loss_matches_numpy_forward_differences():
    rng = np.random.default_rng(70)
    z = rng.normal(size=(2, 3, 6, 7))
    x = rng.normal(size=(2, 3, 6, 7))
    lx, ly = edge_loss(torch.from_numpy(z), torch.from_numpy(x))
    want_x = np.abs(np.diff(z, axis=-1) - np.diff(x, axis=-1)).mean()
    want_y = np.abs(np.diff(z, axis=-2) - np.diff(x, axis=-2)).mean()
    assert lx.item() == pytest.approx(want_x, rel=1e-12)
    assert ly.item() == pytest.approx(want_y, rel=1e-12)


def test_mask_regularizers_half_plane_oracle():
    w = 8
    m = torch.zeros(1, 1, 8, w)
    m[..., w // 2 :] = 1.0
    l_m, l_mx, l_my = mask_regularizers(m)
    assert l_m.item() == pytest.approx(0.5)
    assert l_mx.item() == pytest.approx(1.0 / (w - 1))
    assert l_my.item() == pytest.approx(0.0)
    with pytest.raises(MaskRangeError):
        mask_regularizers(torch.full((1, 1, 4, 4), 2.0))


def _pyramid(model_id, seed, embedding):
    rng = np.random.default_rng(seed)
    return FacePyramid(
        a1=torch.from_numpy(rng.normal(size=(2, 4, 8, 8))),
        a2=torch.from_numpy(rng.normal(size=(2, 8, 4, 4))),
        a3=torch.from_numpy(rng.normal(size=(2, 16, 2, 2))),
        a4=torch.from_numpy(rng.normal(size=(2, 24, 1, 1))),
        embedding=torch.as_tensor(embedding, dtype=torch.float64),
        model_id=model_id,
    )


def test_perceptual_loss_matches_hand_computation():
    px = _pyramid("m", 71, [1.0, 0.0])
    pt = _pyramid("m", 72, [0.0, 1.0])
    pz = _pyramid("m", 73, [0.5, 0.5])
    lam = 0.3
    got = perceptual_loss(px, pt, pz, lam).item()
    want = (
        (px.a1 - pz.a1).abs().mean()
        + (px.a2 - pz.a2).abs().mean()
        + (px.a3 - pz.a3).abs().mean()
        + (pt.a4 - pz.a4).abs().mean()
        - lam * (pt.embedding - pz.embedding).abs().mean()
    ).item()
    assert got == pytest.approx(want, rel=1e-12)


def test_perceptual_loss_is_monotone_decreasing_in_lambda():
    px = _pyramid("m", 74, [1.0, 0.0])
    pt = _pyramid("m", 75, [0.0, 1.0])
    pz = _pyramid("m", 76, [0.5, -0.5])
    values = [perceptual_loss(px, pt, pz, lam).item() for lam in (0.0, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_perceptual_loss_rejects_mixed_descriptors():
    with pytest.raises(DescriptorMismatchError):
        perceptual_loss(_pyramid("m", 77, [1.0]), _pyramid("other", 78, [1.0]),
                        _pyramid("m", 79, [1.0]), 0.1)


def test_mixup_endpoints_and_mean():
    x = torch.full((1, 3, 4, 4), 0.8)
    z = torch.full((1, 3, 4, 4), -0.4)
    rng = np.random.default_rng(80)
    assert torch.equal(mixup_pair(x, z, rng, lambda_beta=1.0).delta_mx, x)
    assert torch.equal(mixup_pair(x, z, rng, lambda_beta=0.0).delta_mx, z)
    half = mixup_pair(x, z, rng, lambda_beta=0.5).delta_mx
    assert torch.allclose(half, torch.full((1, 3, 4, 4), 0.2))
    draws = [mixup_pair(x, z, rng).lambda_beta for _ in range(100000)]
    # Beta(0.2, 0.2) is symmetric about 1/2
    assert np.mean(draws) == pytest.approx(0.5, abs=0.01)
    assert np.std(draws) == pytest.approx(np.sqrt(1.0 / (4 * (2 * 0.2 + 1))), abs=0.01)


def test_gan_losses_tuple_order_and_values():
    # a fixed "discriminator" whose score is the mean pixel value
    def d(img):
        return img.mean(dim=(1, 2, 3))

    x = torch.full((2, 3, 4, 4), 0.6, requires_grad=True)
    sample = mixup_pair(x, torch.zeros(2, 3, 4, 4), np.random.default_rng(81), lambda_beta=1.0)
    l_d, l_g = gan_losses(d, sample)
    # with lambda_beta = 1 the sample is x: l_d = (score-1)^2, l_g = score^2
    assert l_d.item() == pytest.approx((0.6 - 1.0) ** 2, rel=1e-6)
    assert l_g.item() == pytest.approx(0.36, rel=1e-6)


def test_gan_losses_detach_the_discriminator_branch():
    from deid.nn.blocks import Conv
    from deid.nn.init import init_params

    conv = init_params(Conv(3, 1, 3), seed=82)

    def d(img):
        return torch.sigmoid(conv(img)).mean(dim=(1, 2, 3))

    x = torch.rand(1, 3, 4, 4, requires_grad=True)
    sample = mixup_pair(x, torch.zeros(1, 3, 4, 4), np.random.default_rng(83), lambda_beta=0.3)
    l_d, l_g = gan_losses(d, sample)
    l_d.backward(retain_graph=True)
    assert x.grad is None  # the discriminator objective must not reach the generator side
    l_g.backward()
    assert x.grad is not None


def test_weighted_sum_applies_each_alpha_exactly_once():
    w = LossWeights(alpha0=2.0, alpha1=3.0, alpha2=5.0, alpha3=7.0, alpha4=11.0, alpha5=13.0)
    for term, alpha in TERM_TO_ALPHA.items():
        got = weighted_sum(lambda k, t=term: 1.0 if k == t else 0.0, w)
        assert got == pytest.approx(getattr(w, alpha)), term
    all_ones = weighted_sum(lambda k: 1.0, w)
    want = 2.0 + 3 * 3.0 + 4 * 5.0 + 2 * 7.0 + 11.0 + 2 * 13.0
    assert all_ones == pytest.approx(want)


def test_compound_loss_fills_total_and_guards_nan():
    parts = LossReport(l_g=1.0, l_r_raw=2.0, l_m=4.0)
    w = LossWeights()
    total = compound_loss(parts, w).total
    assert total == pytest.approx(0.5 * 1.0 + 0.5 * 2.0 + 3e-3 * 4.0)
    bad = LossReport(l_p_raw=float("nan"))
    with pytest.raises(LossNotFinite, match="l_p_raw"):
        compound_loss(bad, w)
    worse = LossReport(l_x_raw=float("inf"))
    with pytest.raises(LossNotFinite, match="l_x_raw"):
        compound_loss(worse, w)


def test_loss_weights_reject_negatives():
    with pytest.raises(ShapeError):
        LossWeights(alpha2=-0.1)


def test_loss_report_csv_round_trip():
    parts = LossReport(l_g=0.25, total=1.5)
    header = LossReport.csv_header().split(",")
    row = parts.csv_row().split(",")
    assert len(header) == len(row)
    assert float(row[header.index("l_g")]) == 0.25
    assert float(row[header.index("total")]) == 1.5
