"""nn.Module wrappers around the functional ops.

All weights are bias-free. Modules are constructed with uninitialized
parameters; builders call init.init_params(model, seed) before first use.
"""

import torch
from torch import nn

from deid.nn import ops


class Conv(nn.Module):
    """Plain bias-free convolution with same/valid padding."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding="same"):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel, kernel))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, stride=self.stride, padding=self.padding)


class SeparableDown(nn.Module):
    """Strided depthwise separable conv -> instance norm -> lrelu(0.1).

    The encoder's workhorse: halves H,W and changes channel count."""

    def __init__(self, in_ch, out_ch, kernel=3):
        super().__init__()
        self.depthwise = nn.Parameter(torch.empty(in_ch, 1, kernel, kernel))
        self.pointwise = nn.Parameter(torch.empty(out_ch, in_ch, 1, 1))

    def forward(self, x):
        y = ops.depthwise_separable_conv(x, self.depthwise, self.pointwise, stride=2)
        y = ops.instance_norm(y)
        return ops.lrelu(y, 0.1)


class Upscale(nn.Module):
    """conv(4*out_ch) -> instance norm -> lrelu(0.1) -> pixel shuffle.

    out_ch defaults to in_ch // 2 so the standard block halves channels while
    doubling H,W; an explicit out_ch covers the decoder stage right after the
    skip concat, where in_ch is no longer a power of two."""

    def __init__(self, in_ch, out_ch=None, kernel=3):
        super().__init__()
        if out_ch is None:
            out_ch = in_ch // 2
        self.weight = nn.Parameter(torch.empty(4 * out_ch, in_ch, kernel, kernel))

    def forward(self, x):
        return ops.upscale_block(x, self.weight)


class ResidualBlock(nn.Module):
    """x + conv(lrelu(conv(x), 0.2)), channel-preserving."""

    def __init__(self, ch, kernel=3):
        super().__init__()
        self.weight1 = nn.Parameter(torch.empty(ch, ch, kernel, kernel))
        self.weight2 = nn.Parameter(torch.empty(ch, ch, kernel, kernel))

    def forward(self, x):
        return ops.residual_block(x, self.weight1, self.weight2)


class StridedConvDown(nn.Module):
    """Strided plain conv, optional instance norm, lrelu(0.2).

    Used by the discriminator, whose first layer skips normalization."""

    def __init__(self, in_ch, out_ch, kernel=5, norm=True):
        super().__init__()
        self.conv = Conv(in_ch, out_ch, kernel, stride=2)
        self.norm = norm

    def forward(self, x):
        y = self.conv(x)
        if self.norm:
            y = ops.instance_norm(y)
        return ops.lrelu(y, 0.2)


class Linear(nn.Module):
    """Bias-free fully connected layer on (N, in_features)."""

    def __init__(self, in_features, out_features):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_features, in_features))

    def forward(self, x):
        return x @ self.weight.t()
