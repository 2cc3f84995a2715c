"""Shape-checked functional building blocks.

Every op here accepts tensors in (C, H, W) or (N, C, H, W) layout, keeps the
layout it was given, and raises ShapeError with the offending dimensions in
the message instead of letting the backend produce a cryptic one. All ops are
pure; parameters are passed in explicitly.
"""

import torch
import torch.nn.functional as F

from deid.errors import ShapeError


def _batched(x):
    """Return (x as 4-d, had_batch_dim flag)."""
    if x.dim() == 3:
        return x.unsqueeze(0), False
    if x.dim() == 4:
        return x, True
    raise ShapeError(f"expected 3-d (C,H,W) or 4-d (N,C,H,W) tensor, got {x.dim()}-d {tuple(x.shape)}")


def _debatched(y, had_batch):
    return y if had_batch else y.squeeze(0)


def _same_pad(kh, kw):
    return kh // 2, kw // 2


def conv2d(x, weight, stride=1, padding="same", groups=1):
    """2-d convolution, bias-free.

    weight: (out_ch, in_ch/groups, kh, kw). padding is "same" (zero padding,
    preserves H,W at stride 1, halves them at stride 2 for odd kernels) or
    "valid" (no padding).
    """
    x4, had = _batched(x)
    if weight.dim() != 4:
        raise ShapeError(f"conv weight must be 4-d, got {tuple(weight.shape)}")
    out_ch, in_per_group, kh, kw = weight.shape
    cin = x4.shape[1]
    if in_per_group * groups != cin:
        raise ShapeError(
            f"conv weight expects {in_per_group * groups} input channels "
            f"(weight {tuple(weight.shape)}, groups={groups}), input has {cin}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        pad = _same_pad(kh, kw)
    elif padding == "valid":
        pad = (0, 0)
    else:
        raise ShapeError(f"padding must be 'same' or 'valid', got {padding!r}")
    if padding == "valid" and (x4.shape[2] < kh or x4.shape[3] < kw):
        raise ShapeError(
            f"input {tuple(x4.shape[2:])} smaller than kernel ({kh},{kw}) with valid padding"
        )
    y = F.conv2d(x4, weight, bias=None, stride=stride, padding=pad, groups=groups)
    return _debatched(y, had)


def depthwise_separable_conv(x, depthwise_weight, pointwise_weight, stride=1):
    """Depthwise conv (one kernel per input channel, strided) followed by a
    1x1 pointwise conv. depthwise_weight: (C, 1, kh, kw); pointwise_weight:
    (out_ch, C, 1, 1)."""
    x4, had = _batched(x)
    cin = x4.shape[1]
    if depthwise_weight.shape[0] != cin or depthwise_weight.shape[1] != 1:
        raise ShapeError(
            f"depthwise weight must be ({cin},1,kh,kw), got {tuple(depthwise_weight.shape)}"
        )
    if pointwise_weight.shape[1] != cin or pointwise_weight.shape[2:] != (1, 1):
        raise ShapeError(
            f"pointwise weight must be (out,{cin},1,1), got {tuple(pointwise_weight.shape)}"
        )
    y = conv2d(x4, depthwise_weight, stride=stride, padding="same", groups=cin)
    y = conv2d(y, pointwise_weight, stride=1, padding="same")
    return _debatched(y, had)


def instance_norm(x, eps=1e-5):
    """Normalize each channel of each sample to zero mean, unit variance over
    its spatial extent (biased variance). No learned affine terms."""
    x4, had = _batched(x)
    h, w = x4.shape[2], x4.shape[3]
    if h * w < 2:
        raise ShapeError(f"instance_norm needs H*W >= 2, got H={h} W={w}")
    mean = x4.mean(dim=(2, 3), keepdim=True)
    var = x4.var(dim=(2, 3), unbiased=False, keepdim=True)
    y = (x4 - mean) / torch.sqrt(var + eps)
    return _debatched(y, had)


def lrelu(x, alpha):
    if not 0.0 <= alpha < 1.0:
        raise ShapeError(f"lrelu slope must be in [0,1), got {alpha}")
    return F.leaky_relu(x, negative_slope=alpha)


def pixel_shuffle_upscale(x):
    """Rearrange (4k, H, W) -> (k, 2H, 2W).

    Layout convention (frozen by test): out[c, 2h+i, 2w+j] = in[4c + 2i + j, h, w],
    i.e. the four sub-pixels of an output 2x2 cell come from four consecutive
    input channels, row-major within the cell.
    """
    x4, had = _batched(x)
    c = x4.shape[1]
    if c % 4 != 0:
        raise ShapeError(f"pixel_shuffle_upscale needs channels divisible by 4, got {c}")
    y = F.pixel_shuffle(x4, 2)
    return _debatched(y, had)


def upscale_block(x, weight, eps=1e-5):
    """conv -> instance_norm -> lrelu(0.1) -> pixel shuffle.

    With the conventional choice of 2C conv filters for C input channels the
    net effect is (C, H, W) -> (C/2, 2H, 2W)."""
    if weight.shape[0] % 4 != 0:
        raise ShapeError(
            f"upscale conv must emit channels divisible by 4, got {weight.shape[0]}"
        )
    y = conv2d(x, weight, stride=1, padding="same")
    y = instance_norm(y, eps)
    y = lrelu(y, 0.1)
    return pixel_shuffle_upscale(y)


def residual_block(x, weight1, weight2):
    """x + conv(lrelu(conv(x), 0.2)); both convs same-padded, stride 1,
    channel-preserving."""
    x4, had = _batched(x)
    cin = x4.shape[1]
    if weight1.shape[1] != cin or weight2.shape[0] != cin or weight2.shape[1] != weight1.shape[0]:
        raise ShapeError(
            f"residual chain must map {cin} channels back to {cin}, got "
            f"{tuple(weight1.shape)} then {tuple(weight2.shape)}"
        )
    y = conv2d(x4, weight1, stride=1, padding="same")
    y = lrelu(y, 0.2)
    y = conv2d(y, weight2, stride=1, padding="same")
    return _debatched(x4 + y, had)
