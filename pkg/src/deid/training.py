"""Training loop: distortion augmentation, the lambda schedule, alternating
discriminator/generator updates, metrics logging and resumable checkpoints.

Determinism contract: with threads=1 and a fixed seed, runs are bit-identical
and any checkpoint resumes to the exact state of an uninterrupted run. All
randomness flows through one numpy PCG64 generator in a frozen draw order
(batch indices, per-image augmentation, mixup coefficient).
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.ndimage
import torch

from deid import checkpoint as ckpt
from deid import descriptor as desc_mod
from deid.canonical import default_template
from deid.data import AlignedFaceDataset
from deid.errors import ConfigError
from deid.generator import Generator, VariantFlags, arch_hash, build_model
from deid.losses import (
    LossReport,
    LossWeights,
    compound_loss,
    edge_loss,
    mask_regularizers,
    mixup_pair,
    perceptual_loss,
    reconstruction_l1,
    weighted_sum,
)


@dataclass
class AugmentSpec:
    rotation_deg: float = 15.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    elastic_grid: int = 8
    elastic_sigma: float = 2.0  # pixels at 64-res, scaled with resolution


@dataclass
class TrainConfig:
    resolution: int = 64
    batch_size: int = 16
    total_iters: int = 3000
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.99
    seed: int = 1
    checkpoint_every: int = 1000
    threads: int = 1
    lambda_values: tuple = (1e-7, 5e-7, 1e-6, 2e-6)
    lambda_gain: float = 2e8
    weights: LossWeights = field(default_factory=LossWeights)
    variants: VariantFlags = field(default_factory=VariantFlags)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    data_dir: str = ""
    out_dir: str = ""
    descriptor_path: str = ""


def augment(image, spec, rng):
    """Random rotation/scale about the center plus an elastic displacement
    field. image: (3,R,R) numpy in [0,1]. Deterministic given the rng state;
    a zero-magnitude spec returns the input exactly."""
    c, h, w = image.shape
    theta = np.deg2rad(rng.uniform(-spec.rotation_deg, spec.rotation_deg))
    scale = rng.uniform(spec.scale_min, spec.scale_max)
    sigma = spec.elastic_sigma * h / 64.0
    grid_field = rng.normal(0.0, sigma, size=(2, spec.elastic_grid, spec.elastic_grid))

    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cosv, sinv = np.cos(theta), np.sin(theta)
    dxc, dyc = cols - cx, rows - cy
    src_x = cx + (cosv * dxc + sinv * dyc) / scale
    src_y = cy + (-sinv * dxc + cosv * dyc) / scale
    if sigma > 0:
        zoom = (h / spec.elastic_grid, w / spec.elastic_grid)
        src_x = src_x + scipy.ndimage.zoom(grid_field[0], zoom, order=1)
        src_y = src_y + scipy.ndimage.zoom(grid_field[1], zoom, order=1)
    coords = np.stack([src_y.ravel(), src_x.ravel()])
    out = np.empty_like(image)
    for i in range(c):
        out[i] = scipy.ndimage.map_coordinates(
            image[i].astype(np.float64), coords, order=1, mode="nearest"
        ).reshape(h, w).astype(image.dtype)
    return out


def make_lambda_schedule(total_iters, values):
    """Piecewise-constant schedule over equal fractions of the run."""
    values = list(values)
    if not values:
        raise ConfigError("lambda schedule needs at least one value")
    n = len(values)
    return [(total_iters * i // n, v) for i, v in enumerate(values)]


def lambda_at(schedule, it):
    if not schedule:
        raise ConfigError("empty lambda schedule")
    value = None
    for start, v in schedule:
        if start <= it:
            value = v
    if value is None:
        raise ConfigError(f"iteration {it} precedes schedule start {schedule[0][0]}")
    return value


def effective_weights(config):
    w = config.weights
    if config.variants.no_mask_norm:
        w = replace(w, alpha4=0.0)
    if config.variants.no_mask_smooth:
        w = replace(w, alpha5=0.0)
    return w


def effective_lambda(config, schedule, it):
    lam = lambda_at(schedule, it)
    lam *= config.lambda_gain
    if config.variants.weak_lambda:
        lam *= 0.1
    return lam


class TrainState:
    """Everything the loop mutates: models, optimizers, rng, iteration."""

    def __init__(self, config, descriptor):
        desc_mod.require_role(descriptor, "loss")
        self.config = config
        self.descriptor = descriptor
        self.generator, self.discriminator = build_model(
            config.resolution, config.seed, descriptor.embedding_dim, config.variants
        )
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(), lr=config.learning_rate, betas=betas
        )
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=config.learning_rate, betas=betas
        )
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self.schedule = make_lambda_schedule(config.total_iters, config.lambda_values)
        if config.variants.no_lambda_schedule:
            self.schedule = [(0, config.lambda_values[-1])]

    def arch(self):
        return arch_hash(self.generator, self.discriminator)


def train_step(state, batch01):
    """One discriminator update followed by one generator update on a
    (N,3,R,R) [0,1] batch. Returns the LossReport."""
    config = state.config
    g, d, descriptor = state.generator, state.discriminator, state.descriptor
    rng = state.rng
    w = effective_weights(config)
    lam = effective_lambda(config, state.schedule, state.iteration)

    distorted01 = np.stack([augment(img, config.augment, rng) for img in batch01])
    x = torch.from_numpy(batch01) * 2.0 - 1.0
    x_dist = torch.from_numpy(distorted01) * 2.0 - 1.0

    # target t is the same undistorted image, so the source and target
    # pyramids coincide
    with torch.no_grad():
        px = desc_mod.pyramid(descriptor, x)
    pt = px

    out = g(x_dist, x, px.embedding)

    lam_beta = float(rng.beta(config.weights.mixup_alpha, config.weights.mixup_alpha))
    samples = [mixup_pair(x, out.z_masked, None, lambda_beta=lam_beta)]
    if not config.variants.adv_masked_only:
        samples.append(mixup_pair(x, out.z_raw, None, lambda_beta=lam_beta))

    l_d = sum(((d(s.delta_mx.detach()) - s.lambda_beta) ** 2).mean() for s in samples)
    state.opt_d.zero_grad()
    l_d.backward()
    state.opt_d.step()

    l_g = sum(((d(s.delta_mx) - (1.0 - s.lambda_beta)) ** 2).mean() for s in samples)

    terms = {"l_g": l_g, "l_d": l_d}
    terms["l_r_raw"] = reconstruction_l1(out.z_raw, x)
    terms["l_r_masked"] = reconstruction_l1(out.z_masked, x)
    terms["l_x_raw"], terms["l_y_raw"] = edge_loss(out.z_raw, x)
    terms["l_x_masked"], terms["l_y_masked"] = edge_loss(out.z_masked, x)
    pz_raw = desc_mod.pyramid(descriptor, out.z_raw)
    pz_masked = desc_mod.pyramid(descriptor, out.z_masked)
    terms["l_p_raw"] = perceptual_loss(px, pt, pz_raw, lam)
    terms["l_p_masked"] = perceptual_loss(px, pt, pz_masked, lam)
    terms["l_m"], terms["l_m_x"], terms["l_m_y"] = mask_regularizers(out.mask)
    if config.variants.aux_lowres_loss:
        lo_x = torch.nn.functional.avg_pool2d(x, 2)
        terms["l_r_low"] = (
            (torch.nn.functional.avg_pool2d(out.z_raw, 2) - lo_x).abs().mean()
            + (torch.nn.functional.avg_pool2d(out.z_masked, 2) - lo_x).abs().mean()
        )

    total = weighted_sum(lambda k: terms.get(k, 0.0), w)
    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()

    report = LossReport(
        **{k: float(v.detach()) if torch.is_tensor(v) else float(v) for k, v in terms.items()}
    )
    return compound_loss(report, w)


def save_train_checkpoint(state, path, extra_meta=None):
    tensors = {}
    tensors.update(ckpt.module_tensors(state.generator, "g"))
    tensors.update(ckpt.module_tensors(state.discriminator, "d"))
    tensors.update(ckpt.module_tensors(state.descriptor, "desc"))
    tensors.update(ckpt.optimizer_tensors(state.opt_g, "opt_g"))
    tensors.update(ckpt.optimizer_tensors(state.opt_d, "opt_d"))
    meta = {
        "kind": "train-state",
        "iteration": state.iteration,
        "resolution": state.config.resolution,
        "cond_dim": state.descriptor.embedding_dim,
        "variants": state.config.variants.names(),
        "rng_state": state.rng.bit_generator.state,
        "descriptor": {
            "resolution": state.descriptor.resolution,
            "width": state.descriptor.width,
            "embedding_dim": state.descriptor.embedding_dim,
            "n_classes": state.descriptor.n_classes,
            "role": state.descriptor.role,
            "seed": state.descriptor.seed,
        },
    }
    if extra_meta:
        meta.update(extra_meta)
    ckpt.save_checkpoint(path, tensors, state.arch(), meta)


def load_train_checkpoint(path, config):
    """Rebuild a TrainState from a checkpoint written by save_train_checkpoint."""
    tensors, arch, meta = ckpt.load_checkpoint(path)
    descriptor = load_descriptor_from_tensors(tensors, meta["descriptor"], prefix="desc")
    state = TrainState(config, descriptor)
    if state.arch() != arch:
        raise ckpt.CheckpointError(
            f"{path}: architecture mismatch: checkpoint {arch}, config builds {state.arch()}"
        )
    ckpt.load_module(state.generator, tensors, "g")
    ckpt.load_module(state.discriminator, tensors, "d")
    ckpt.load_optimizer(state.opt_g, tensors, "opt_g")
    ckpt.load_optimizer(state.opt_d, tensors, "opt_d")
    state.rng.bit_generator.state = meta["rng_state"]
    state.iteration = meta["iteration"]
    return state


def load_descriptor_from_tensors(tensors, dmeta, prefix):
    cfg = desc_mod.DescriptorConfig(
        resolution=dmeta["resolution"],
        width=dmeta["width"],
        embedding_dim=dmeta["embedding_dim"],
        role=dmeta["role"],
        seed=dmeta["seed"],
    )
    net = desc_mod.build_descriptor(cfg, dmeta["n_classes"])
    ckpt.load_module(net, tensors, prefix)
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net


def save_descriptor(net, path):
    meta = {
        "kind": "descriptor",
        "resolution": net.resolution,
        "width": net.width,
        "embedding_dim": net.embedding_dim,
        "n_classes": net.n_classes,
        "role": net.role,
        "seed": net.seed,
    }
    ckpt.save_checkpoint(path, ckpt.module_tensors(net, "desc"), net.arch_descriptor(), meta)


def load_model_bundle(path):
    """Inference-side loader: the generator and its conditioning descriptor.
    Returns (generator, loss_descriptor, arch, meta)."""
    tensors, arch, meta = ckpt.load_checkpoint(path)
    if meta.get("kind") != "train-state":
        raise ConfigError(f"{path} is not a model checkpoint")
    descriptor = load_descriptor_from_tensors(tensors, meta["descriptor"], "desc")
    g = Generator(meta["resolution"], meta["cond_dim"], VariantFlags.from_names(meta["variants"]))
    ckpt.load_module(g, tensors, "g")
    g.eval()
    for p in g.parameters():
        p.requires_grad_(False)
    return g, descriptor, arch, meta


def load_descriptor(path, expect_role=None):
    tensors, _, meta = ckpt.load_checkpoint(path)
    if meta.get("kind") not in ("descriptor", "train-state"):
        raise ConfigError(f"{path} is not a descriptor checkpoint")
    net = load_descriptor_from_tensors(tensors, meta["descriptor"] if meta["kind"] == "train-state" else meta, "desc")
    if expect_role is not None:
        desc_mod.require_role(net, expect_role)
    return net


def train(config, resume=None, dataset=None, descriptor=None, log=print):
    """Run (or resume) a full training; returns the final TrainState.

    Writes metrics.csv, periodic ckpt-NNNNNN.ckpt files and model.ckpt into
    config.out_dir.
    """
    torch.set_num_threads(max(1, config.threads))
    if config.threads != 1 and log:
        log("warning: threads != 1 trades bit-determinism for throughput")
    if dataset is None:
        template = default_template(config.resolution)
        dataset = AlignedFaceDataset(config.data_dir, config.resolution, template, split="train", log=log)
    if resume is not None:
        state = load_train_checkpoint(resume, config)
    else:
        if descriptor is None:
            if not config.descriptor_path:
                raise ConfigError("train needs a conditioning descriptor (train.descriptor)")
            descriptor = load_descriptor(config.descriptor_path, expect_role="loss")
        state = TrainState(config, descriptor)

    os.makedirs(config.out_dir, exist_ok=True)
    metrics_path = os.path.join(config.out_dir, "metrics.csv")
    new_file = state.iteration == 0 or not os.path.exists(metrics_path)
    metrics = open(metrics_path, "w" if new_file else "a", encoding="utf-8")
    if new_file:
        metrics.write("iteration," + LossReport.csv_header() + "\n")

    n = len(dataset)
    t0 = time.monotonic()
    try:
        while state.iteration < config.total_iters:
            idx = state.rng.integers(0, n, size=config.batch_size)
            batch = dataset.images[idx]
            report = train_step(state, batch)
            metrics.write(f"{state.iteration}," + report.csv_row() + "\n")
            state.iteration += 1
            it = state.iteration
            if log and (it % max(1, config.total_iters // 10) == 0 or it == config.total_iters):
                log(
                    f"iter {it}/{config.total_iters} total {report.total:.4f} "
                    f"l_r {report.l_r_masked:.4f} l_p {report.l_p_masked:.4f} "
                    f"({time.monotonic() - t0:.0f}s)"
                )
            if it % config.checkpoint_every == 0 or it == config.total_iters:
                save_train_checkpoint(state, os.path.join(config.out_dir, f"ckpt-{it:06d}.ckpt"))
    finally:
        metrics.close()
    save_train_checkpoint(state, os.path.join(config.out_dir, "model.ckpt"))
    return state
