"""Conditional encoder-decoder generator and the discriminator.

Encoder: conv stem, five strided depthwise separable convs with instance
norm, then one fully connected layer to the bottleneck. A single-channel
low-capacity skip is tapped at quarter resolution and concatenated into the
decoder at the matching stage. Decoder: fully connected layer into a 4x4 map,
then upscale/residual pairs up to the output resolution, terminated by a tanh
image head and a sigmoid mask head. The conditioning embedding is
concatenated to the bottleneck latent before the decoder.
"""

import hashlib
from dataclasses import dataclass, field

import torch
from torch import nn

from deid.errors import ShapeError
from deid.geometry import blend
from deid.nn import ops
from deid.nn.blocks import Conv, Linear, ResidualBlock, SeparableDown, StridedConvDown, Upscale
from deid.nn.init import init_params

# stem width, the five downsampling widths, bottleneck, decoder start width,
# discriminator widths
PLANS = {
    64: dict(stem=24, downs=(32, 48, 64, 96, 128), bottleneck=512, dec0=128, disc=(32, 64, 96, 128)),
    128: dict(stem=32, downs=(64, 128, 256, 512, 1024), bottleneck=1024, dec0=512, disc=(64, 128, 256, 512)),
    256: dict(stem=32, downs=(64, 128, 256, 512, 1024), bottleneck=1024, dec0=512, disc=(64, 128, 256, 512)),
}


@dataclass
class VariantFlags:
    """Training/architecture ablation switches. All off reproduces the full
    method."""

    no_mask: bool = False
    adv_masked_only: bool = False
    no_lambda_schedule: bool = False
    aux_lowres_loss: bool = False
    weak_lambda: bool = False
    no_descriptor_concat: bool = False
    no_mask_norm: bool = False
    no_mask_smooth: bool = False

    @classmethod
    def from_names(cls, names):
        flags = cls()
        for name in names:
            if not hasattr(flags, name):
                raise ShapeError(f"unknown variant flag {name!r}")
            setattr(flags, name, True)
        return flags

    def names(self):
        return [k for k, v in self.__dict__.items() if v]


@dataclass
class GeneratorOutput:
    z_raw: torch.Tensor  # (N,3,R,R) in [-1,1]
    mask: torch.Tensor  # (N,1,R,R) in (0,1)
    z_masked: torch.Tensor  # blend of x_aligned and z_raw under mask


class Encoder(nn.Module):
    def __init__(self, resolution, plan):
        super().__init__()
        self.resolution = resolution
        self.stem = Conv(3, plan["stem"], 5)
        downs = []
        ch = plan["stem"]
        for w in plan["downs"]:
            downs.append(SeparableDown(ch, w))
            ch = w
        self.downs = nn.ModuleList(downs)
        # skip is tapped after the second downscale (quarter resolution)
        self.skip_proj = Conv(plan["downs"][1], 1, 1)
        final_map = resolution // 2 ** len(plan["downs"])
        self.fc = Linear(ch * final_map * final_map, plan["bottleneck"])
        self.bottleneck = plan["bottleneck"]

    def forward(self, x):
        if x.shape[-1] != self.resolution or x.shape[-2] != self.resolution:
            raise ShapeError(
                f"encoder expects {self.resolution}x{self.resolution} input, got {tuple(x.shape)}"
            )
        h = ops.lrelu(self.stem(x), 0.1)
        skip = None
        for i, down in enumerate(self.downs):
            h = down(h)
            if i == 1:
                skip = self.skip_proj(h)
        latent = self.fc(h.flatten(1))
        return latent, skip


class Decoder(nn.Module):
    def __init__(self, resolution, plan, cond_dim):
        super().__init__()
        self.resolution = resolution
        dec0 = plan["dec0"]
        self.fc = Linear(plan["bottleneck"] + cond_dim, 4 * 4 * dec0)
        self.dec0 = dec0
        n_pairs = {64: 4, 128: 5, 256: 6}[resolution]
        skip_res = resolution // 4
        ups, residuals = [], []
        ch, res = dec0, 4
        self.skip_stage = None
        for i in range(n_pairs):
            in_ch = ch
            if res == skip_res:
                self.skip_stage = i
                in_ch = ch + 1
            out_ch = ch // 2
            ups.append(Upscale(in_ch, out_ch))
            residuals.append(ResidualBlock(out_ch))
            ch = out_ch
            res *= 2
        assert res == resolution and self.skip_stage is not None
        self.ups = nn.ModuleList(ups)
        self.residuals = nn.ModuleList(residuals)
        self.img_head = Conv(ch, 3, 3)
        self.mask_head = Conv(ch, 1, 3)

    def forward(self, latent_and_cond, skip):
        h = self.fc(latent_and_cond).reshape(-1, self.dec0, 4, 4)
        for i, (up, res_block) in enumerate(zip(self.ups, self.residuals)):
            if i == self.skip_stage:
                h = torch.cat([h, skip], dim=1)
            h = res_block(up(h))
        z_raw = torch.tanh(self.img_head(h))
        mask = torch.sigmoid(self.mask_head(h))
        return z_raw, mask


class Generator(nn.Module):
    def __init__(self, resolution, cond_dim, variants=None):
        super().__init__()
        if resolution not in PLANS:
            raise ShapeError(f"unsupported resolution {resolution}; supported: {sorted(PLANS)}")
        plan = PLANS[resolution]
        self.encoder = Encoder(resolution, plan)
        self.decoder = Decoder(resolution, plan, cond_dim)
        self.resolution = resolution
        self.cond_dim = cond_dim
        self.variants = variants or VariantFlags()

    def arch_descriptor(self):
        arch_flags = sorted(
            n for n in self.variants.names() if n in ("no_mask", "no_descriptor_concat")
        )
        return f"generator/r{self.resolution}/c{self.cond_dim}/" + ",".join(arch_flags)

    def encode(self, x_distorted):
        return self.encoder(x_distorted)

    def forward(self, x_distorted, x_aligned, cond_embedding):
        if cond_embedding.shape[-1] != self.cond_dim:
            raise ShapeError(
                f"conditioning dim {cond_embedding.shape[-1]} != model cond_dim {self.cond_dim}"
            )
        latent, skip = self.encoder(x_distorted)
        cond = cond_embedding
        if cond.dim() == 1:
            cond = cond.unsqueeze(0).expand(latent.shape[0], -1)
        if self.variants.no_descriptor_concat:
            cond = torch.zeros_like(cond)
        z_raw, mask = self.decoder(torch.cat([latent, cond], dim=1), skip)
        if self.variants.no_mask:
            z_masked = z_raw
        else:
            z_masked = blend(x_aligned, z_raw, mask)
        return GeneratorOutput(z_raw=z_raw, mask=mask, z_masked=z_masked)


class Discriminator(nn.Module):
    """Four strided convs (instance norm on all but the first), then a
    sigmoid-activated conv reduced to one score per sample."""

    def __init__(self, resolution, plan=None):
        super().__init__()
        widths = (plan or PLANS[resolution])["disc"]
        layers = []
        ch = 3
        for i, w in enumerate(widths):
            layers.append(StridedConvDown(ch, w, norm=i > 0))
            ch = w
        self.layers = nn.ModuleList(layers)
        self.head = Conv(ch, 1, 3)
        self.resolution = resolution

    def arch_descriptor(self):
        return f"discriminator/r{self.resolution}"

    def forward(self, img):
        if img.shape[-1] != self.resolution or img.shape[-2] != self.resolution:
            raise ShapeError(
                f"discriminator expects {self.resolution}x{self.resolution}, got {tuple(img.shape)}"
            )
        h = img if img.dim() == 4 else img.unsqueeze(0)
        for layer in self.layers:
            h = layer(h)
        score = torch.sigmoid(self.head(h))
        return score.mean(dim=(1, 2, 3))


def arch_hash(*models):
    text = ";".join(m.arch_descriptor() for m in models)
    names = ";".join(
        f"{n}:{tuple(p.shape)}" for m in models for n, p in m.named_parameters()
    )
    return hashlib.sha256((text + "|" + names).encode()).hexdigest()[:16]


def build_model(resolution, seed, cond_dim, variants=None):
    """Generator and discriminator with frozen-seed initialization."""
    g = Generator(resolution, cond_dim, variants)
    d = Discriminator(resolution)
    init_params(g, seed)
    init_params(d, seed + 1)
    return g, d
