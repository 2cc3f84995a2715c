"""Executable experiment recipes with pass/fail metric bounds.

Each recipe names one experiment, the artifacts it needs, the metrics it
computes and the bounds those metrics must satisfy. Runners take a plain dict
of prepared artifacts (the keys each one reads are listed in its docstring)
and return a metrics dict; verify_recipe compares metrics against bounds and
returns a report with one row per bound. Bounds carry explicit tolerances and
every recipe is pinned to fixed seeds, so reports are reproducible.

Artifact context keys used across runners:
  corpus_dir       directory of frames + .lmk sidecars + labels.csv
  train_set        AlignedFaceDataset over the train split
  heldout_set      AlignedFaceDataset over the heldout split
  loss_descriptor  frozen descriptor with role "loss"
  eval_descriptor  frozen descriptor with role "eval"
  model_path       trained desk checkpoint (train-state bundle)
  sweep_paths      checkpoints trained at ascending repulsion strengths
  ablation_rows    dict variant -> {pixel_l1, id_distance, mean_mask, error}
  work_dir         scratch directory for runners that train or write files
"""

import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np
import torch
from scipy.ndimage import binary_erosion
from torch import nn

from deid import evaluation
from deid.canonical import default_template
from deid.descriptor import DescriptorConfig, build_descriptor, pyramid
from deid.generator import Generator, GeneratorOutput, build_model
from deid.geometry import blend, convex_hull_mask
from deid.losses import (
    edge_loss,
    gan_losses,
    mask_regularizers,
    mixup_pair,
    perceptual_loss,
    reconstruction_l1,
)
from deid.nn import ops
from deid.nn.blocks import Conv
from deid.nn.init import init_params
from deid.pipeline import (
    TargetCondition,
    load_frames,
    prepare_target,
    process_batch,
    process_frame,
    process_stream,
    write_stats,
)
from deid.training import TrainConfig, load_model_bundle, train


@dataclass(frozen=True)
class Bound:
    metric: str
    op: str  # one of <=, >=, <, >, ==
    limit: float
    tolerance: float = 0.0  # slack for == comparisons

    def check(self, value):
        if value is None or math.isnan(value):
            return False
        if self.op == "<=":
            return value <= self.limit
        if self.op == ">=":
            return value >= self.limit
        if self.op == "<":
            return value < self.limit
        if self.op == ">":
            return value > self.limit
        if self.op == "==":
            return abs(value - self.limit) <= self.tolerance
        raise ValueError(f"unknown bound op {self.op!r}")

    def describe(self):
        text = f"{self.op} {self.limit:g}"
        if self.op == "==" and self.tolerance:
            text += f" ±{self.tolerance:g}"
        return text


@dataclass(frozen=True)
class ExperimentRecipe:
    name: str
    title: str
    runtime_class: str  # seconds | minutes | half-hour
    bounds: tuple
    runner: object  # ctx dict -> metrics dict


@dataclass(frozen=True)
class BoundResult:
    metric: str
    value: float
    expected: str
    ok: bool


@dataclass(frozen=True)
class RecipeReport:
    recipe: str
    passed: bool
    rows: tuple

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        parts = ", ".join(
            f"{r.metric}={r.value:.6g} ({r.expected}{'' if r.ok else ' VIOLATED'})"
            for r in self.rows
        )
        return f"{verdict} {self.recipe}: {parts}"


def verify_recipe(recipe, ctx, log=print):
    """Run the recipe's experiment and compare every metric to its bound.
    Violated bounds fail the report with measured vs expected; they never
    raise."""
    metrics = recipe.runner(ctx)
    rows = []
    for bound in recipe.bounds:
        value = metrics.get(bound.metric, float("nan"))
        value = float(value) if value is not None else float("nan")
        rows.append(BoundResult(bound.metric, value, bound.describe(), bound.check(value)))
    report = RecipeReport(recipe.name, all(r.ok for r in rows), tuple(rows))
    if log:
        log(report.summary())
    return report


def report_csv(reports, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("recipe,metric,value,expected,ok\n")
        for report in reports:
            for r in report.rows:
                f.write(f"{report.recipe},{r.metric},{r.value:.6g},{r.expected},{int(r.ok)}\n")


# ---------------------------------------------------------------------------
# gradient check


class _ToyGenerator(nn.Module):
    """Two-layer generator for finite-difference checks: a shared conv
    feature layer, then tanh image and sigmoid mask heads."""

    def __init__(self, channels=6):
        super().__init__()
        self.stem = Conv(3, channels, 3)
        self.img_head = Conv(channels, 3, 3)
        self.mask_head = Conv(channels, 1, 3)

    def forward(self, x):
        h = ops.lrelu(self.stem(x), 0.1)
        z_raw = torch.tanh(self.img_head(h))
        mask = torch.sigmoid(self.mask_head(h))
        return GeneratorOutput(z_raw=z_raw, mask=mask, z_masked=blend(x, z_raw, mask))


class _ToyDiscriminator(nn.Module):
    def __init__(self, channels=6):
        super().__init__()
        self.conv = Conv(3, channels, 3, stride=2)
        self.head = Conv(channels, 1, 3)

    def forward(self, img):
        h = ops.lrelu(self.conv(img), 0.2)
        return torch.sigmoid(self.head(h)).mean(dim=(1, 2, 3))


def _max_fd_rel_err(loss_fn, params, rng, step=1e-5, per_tensor=6):
    """Worst relative error between analytic gradients and float64 central
    finite differences over a seeded sample of elements per parameter.

    Probes where an absolute-value kink falls inside the probe interval are
    skipped: central differences say nothing about the analytic gradient at a
    non-differentiable point. A kink is detected by disagreement between the
    full-step and eighth-step difference quotients, which for a smooth term
    agree to O(step^2). Returns (worst error, probes kept, probes skipped)."""
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)

    def quotient(flat, i, saved, h):
        flat[i] = saved + h
        hi = float(loss_fn().detach())
        flat[i] = saved - h
        lo = float(loss_fn().detach())
        flat[i] = saved
        return (hi - lo) / (2.0 * h)

    worst, kept, skipped = 0.0, 0, 0
    for p, grad in zip(params, grads):
        flat = p.data.reshape(-1)
        for i in rng.choice(flat.numel(), size=min(per_tensor, flat.numel()), replace=False):
            i = int(i)
            saved = flat[i].item()
            fd = quotient(flat, i, saved, step)
            fd_small = quotient(flat, i, saved, step / 8.0)
            if abs(fd - fd_small) > 1e-3 * max(abs(fd), abs(fd_small), 1e-6):
                skipped += 1
                continue
            kept += 1
            analytic = 0.0 if grad is None else float(grad.reshape(-1)[i])
            err = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            worst = max(worst, err)
    return worst, kept, skipped


def run_gradient_check(ctx):
    """Needs no prepared artifacts. Checks every loss term's gradient on a
    toy generator/discriminator at 16x16 in float64."""
    started = time.monotonic()
    g = init_params(_ToyGenerator(), 11).double()
    d = init_params(_ToyDiscriminator(), 12).double()
    desc = build_descriptor(
        DescriptorConfig(resolution=16, width=4, embedding_dim=8, role="loss", seed=13),
        n_classes=4,
    ).double()
    # spread the toy activations: with the tiny training-time init the mask
    # and its spatial differences cluster at zero, right on the L1 kinks
    for model in (g, d, desc):
        for p in model.parameters():
            p.data *= 25.0
    rng = np.random.default_rng(14)
    x = torch.from_numpy(rng.uniform(-0.9, 0.9, size=(2, 3, 16, 16)))
    t = torch.from_numpy(rng.uniform(-0.9, 0.9, size=(2, 3, 16, 16)))
    with torch.no_grad():
        px = pyramid(desc, x)
        pt = pyramid(desc, t)
    lam = 0.5  # repulsion weight large enough to dominate rounding at toy scale
    lb = 0.375  # fixed mixup coefficient; the Beta draw is exercised elsewhere

    terms = {
        "l_r_raw": lambda: reconstruction_l1(g(x).z_raw, x),
        "l_r_masked": lambda: reconstruction_l1(g(x).z_masked, x),
        "l_x_raw": lambda: edge_loss(g(x).z_raw, x)[0],
        "l_y_raw": lambda: edge_loss(g(x).z_raw, x)[1],
        "l_x_masked": lambda: edge_loss(g(x).z_masked, x)[0],
        "l_y_masked": lambda: edge_loss(g(x).z_masked, x)[1],
        "l_m": lambda: mask_regularizers(g(x).mask)[0],
        "l_m_x": lambda: mask_regularizers(g(x).mask)[1],
        "l_m_y": lambda: mask_regularizers(g(x).mask)[2],
        "l_p_raw": lambda: perceptual_loss(px, pt, pyramid(desc, g(x).z_raw), lam),
        "l_p_masked": lambda: perceptual_loss(px, pt, pyramid(desc, g(x).z_masked), lam),
        "l_g": lambda: gan_losses(d, mixup_pair(x, g(x).z_masked, None, lambda_beta=lb))[1],
    }
    g_params = [p for _, p in g.named_parameters()]
    d_params = [p for _, p in d.named_parameters()]
    errs, kept, skipped = {}, 0, 0
    for name, fn in terms.items():
        errs[name], k, s = _max_fd_rel_err(fn, g_params, rng)
        kept, skipped = kept + k, skipped + s
    errs["l_d"], k, s = _max_fd_rel_err(
        lambda: gan_losses(d, mixup_pair(x, g(x).z_masked, None, lambda_beta=lb))[0],
        d_params,
        rng,
    )
    kept, skipped = kept + k, skipped + s
    return {
        "max_rel_err": max(errs.values()),
        "terms_checked": len(errs),
        "probes_kept": kept,
        "kink_fraction": skipped / max(1, kept + skipped),
        "seconds": time.monotonic() - started,
    }


# ---------------------------------------------------------------------------
# architecture suite


def run_architecture_suite(ctx):
    """Needs no prepared artifacts. Asserts the structural contracts: bottleneck
    widths, single-channel quarter-resolution skip, upscale/residual pair count
    at full resolution, head ranges, normalization moments and the pixel
    shuffle bijection."""
    metrics = {}
    rng = np.random.default_rng(21)

    g64, d64 = build_model(64, seed=22, cond_dim=16)
    x = torch.from_numpy(rng.uniform(-1.0, 1.0, size=(2, 3, 64, 64)).astype(np.float32))
    cond = torch.from_numpy(rng.standard_normal((2, 16)).astype(np.float32))
    with torch.no_grad():
        latent, skip = g64.encoder(x)
        out = g64(x, x, cond)
        score = d64(x)
    metrics["bottleneck_len_desk"] = latent.shape[1]
    metrics["skip_channels_desk"] = skip.shape[1]
    metrics["skip_res_desk"] = skip.shape[-1]
    metrics["img_head_max_abs"] = float(out.z_raw.abs().max())
    metrics["mask_head_min"] = float(out.mask.min())
    metrics["mask_head_max"] = float(out.mask.max())
    metrics["disc_score_max_abs_dev"] = float((score - 0.5).abs().max())

    g128 = Generator(128, cond_dim=16)
    init_params(g128.encoder, 23)
    with torch.no_grad():
        latent128, skip128 = g128.encoder(
            torch.from_numpy(rng.uniform(-1.0, 1.0, size=(1, 3, 128, 128)).astype(np.float32))
        )
    metrics["bottleneck_len_wide"] = latent128.shape[1]
    metrics["skip_res_wide"] = skip128.shape[-1]
    metrics["skip_channels_wide"] = skip128.shape[1]

    g256 = Generator(256, cond_dim=16)  # structure only, never run forward
    pairs = len(g256.decoder.ups)
    metrics["up_res_pairs_256"] = pairs if len(g256.decoder.residuals) == pairs else -1
    metrics["bottleneck_len_256"] = g256.encoder.bottleneck

    normed = ops.instance_norm(
        torch.from_numpy(rng.standard_normal((3, 8, 9, 11)).astype(np.float32))
    )
    metrics["in_mean_abs"] = float(normed.mean(dim=(-2, -1)).abs().max())
    metrics["in_var_err"] = float((normed.var(dim=(-2, -1), unbiased=False) - 1.0).abs().max())

    planes = torch.arange(64, dtype=torch.float32).reshape(1, 16, 2, 2)
    shuffled = ops.pixel_shuffle_upscale(planes)
    mismatch = 0
    for c in range(4):
        for hh in range(4):
            for ww in range(4):
                src = planes[0, 4 * c + 2 * (hh % 2) + (ww % 2), hh // 2, ww // 2]
                mismatch += int(shuffled[0, c, hh, ww] != src)
    values = sorted(float(v) for v in shuffled.flatten())
    mismatch += int(values != sorted(float(v) for v in planes.flatten()))
    metrics["shuffle_mismatch"] = mismatch
    return metrics


# ---------------------------------------------------------------------------
# trained-model recipes


def run_deid_effect(ctx):
    """Needs: model_path, eval_descriptor, train_set, heldout_set."""
    g, loss_desc, _, _ = load_model_bundle(ctx["model_path"])
    train_set, heldout = ctx["train_set"], ctx["heldout_set"]
    idx = evaluation.select_probes(train_set.labels, 3)
    result = evaluation.rank_protocol(
        g,
        loss_desc,
        ctx["eval_descriptor"],
        heldout.images,
        heldout.labels,
        train_set.images[idx],
        train_set.labels[idx],
    )
    return {
        "original_top1": result["original"].top1,
        "original_median_rank": result["original"].median,
        "deid_median_rank": result["deid"].median,
        "distance_ratio": result["id_distance"] / result["noise_floor"],
        "gallery_size": result["gallery_size"],
    }


def run_appearance(ctx):
    """Needs: model_path, corpus_dir. Self-targeted de-identification of whole
    frames; measures hull-interior pixel change and exterior exactness."""
    g, loss_desc, _, _ = load_model_bundle(ctx["model_path"])
    template = default_template(g.resolution)
    named = [(n, f) for n, f in load_frames(ctx["corpus_dir"]) if f.landmarks is not None][:24]
    l1s, mismatches = [], 0
    for name, frame in named:
        cond = prepare_target(loss_desc, frame.image, frame.landmarks, template, source=name)
        result = process_frame(frame, cond, g, template, log=None)
        inside = convex_hull_mask(frame.landmarks.points, frame.image.shape[1:]) > 0.5
        l1s.append(float(np.abs(result.image - frame.image)[:, inside].mean()))
        mismatches += int((result.image[:, ~inside] != frame.image[:, ~inside]).sum())
    return {
        "pixel_l1_inside_hull": float(np.mean(l1s)),
        "outside_hull_mismatch": mismatches,
        "frames": len(named),
    }


def run_verification(ctx):
    """Needs: model_path, eval_descriptor, train_set."""
    g, loss_desc, _, _ = load_model_bundle(ctx["model_path"])
    train_set = ctx["train_set"]
    idx = evaluation.select_probes(train_set.labels, 3)
    clean, deid = evaluation.verify_protocol(
        g,
        loss_desc,
        ctx["eval_descriptor"],
        train_set.images[idx],
        train_set.labels[idx],
        0.01,
        np.random.default_rng(51),
    )
    return {"tpr_clean": clean.tpr, "tpr_deid": deid.tpr, "impostor_pairs": deid.n_impostor}


def run_lambda_monotonicity(ctx):
    """Needs: sweep_paths (ascending repulsion strength), eval_descriptor,
    train_set."""
    train_set = ctx["train_set"]
    idx = evaluation.select_probes(train_set.labels, 2)
    dists = evaluation.lambda_sweep(ctx["sweep_paths"], train_set.images[idx], ctx["eval_descriptor"])
    rho = evaluation.spearman(dists, list(range(len(dists))))
    return {
        "spearman": rho,
        "min_step": min(b - a for a, b in zip(dists, dists[1:])),
        "models": len(dists),
    }


def run_ablation_orderings(ctx):
    """Needs: ablation_rows with entries for base, no_mask, weak_lambda and
    no_mask_norm. Metrics are signed differences against the full method."""
    rows = ctx["ablation_rows"]

    def get(variant, key):
        row = rows.get(variant, {})
        if row.get("error") or key not in row:
            return float("nan")
        return float(row[key])

    return {
        "no_mask_l1_minus_base": get("no_mask", "pixel_l1") - get("base", "pixel_l1"),
        "weak_lambda_dist_minus_base": get("weak_lambda", "id_distance") - get("base", "id_distance"),
        "no_mask_norm_mask_minus_base": get("no_mask_norm", "mean_mask") - get("base", "mean_mask"),
    }


def run_determinism(ctx):
    """Needs: train_set, loss_descriptor, work_dir. Trains short seeded runs
    and compares checkpoint files byte for byte."""
    work = os.path.join(ctx["work_dir"], "determinism")
    dataset, desc = ctx["train_set"], ctx["loss_descriptor"]
    base = TrainConfig(
        resolution=64,
        batch_size=8,
        total_iters=100,
        checkpoint_every=50,
        seed=33,
        data_dir="",
        out_dir="",
    )

    def run(name):
        cfg = replace(base, out_dir=os.path.join(work, name))
        train(cfg, dataset=dataset, descriptor=desc, log=None)
        return cfg.out_dir

    dir_a = run("a")
    dir_b = run("b")

    def read(path):
        with open(path, "rb") as f:
            return f.read()

    pair_equal = read(os.path.join(dir_a, "ckpt-000100.ckpt")) == read(
        os.path.join(dir_b, "ckpt-000100.ckpt")
    )

    cfg_c = replace(base, total_iters=51, out_dir=os.path.join(work, "c"))
    train(cfg_c, dataset=dataset, descriptor=desc, log=None)
    cfg_d = replace(base, total_iters=51, out_dir=os.path.join(work, "d"))
    train(cfg_d, resume=os.path.join(cfg_c.out_dir, "ckpt-000050.ckpt"),
          dataset=dataset, descriptor=desc, log=None)
    resume_equal = read(os.path.join(cfg_c.out_dir, "model.ckpt")) == read(
        os.path.join(cfg_d.out_dir, "model.ckpt")
    )
    return {
        "checkpoint_bytes_equal": int(pair_equal),
        "resume_bytes_equal": int(resume_equal),
    }


# ---------------------------------------------------------------------------
# pipeline recipes


class _StubGenerator:
    """Callable standing in for a trained generator; forced raw/mask outputs
    expose the pipeline's blending arithmetic."""

    resolution = 64

    def __init__(self, mode):
        self.mode = mode  # "zero-mask" or "echo"

    def __call__(self, x_distorted, x_aligned, cond_embedding):
        if self.mode == "zero-mask":
            return GeneratorOutput(
                z_raw=-x_distorted, mask=torch.zeros_like(x_distorted[:, :1]),
                z_masked=x_aligned,
            )
        return GeneratorOutput(
            z_raw=x_distorted, mask=torch.ones_like(x_distorted[:, :1]),
            z_masked=x_distorted,
        )


def _stub_condition():
    from deid.descriptor import FacePyramid

    zero = torch.zeros(1)
    return TargetCondition(
        pyramid=FacePyramid(a1=zero, a2=zero, a3=zero, a4=zero, embedding=torch.zeros(8),
                            model_id="stub"),
        source="stub",
    )


def run_pipeline_identity(ctx):
    """Needs: corpus_dir. A zero mask must leave frames bitwise untouched; an
    echoing generator must reproduce the hull interior up to the warp
    round-trip bound."""
    frames = [f for _, f in load_frames(ctx["corpus_dir"]) if f.landmarks is not None]
    frames = frames[:: max(1, len(frames) // 12)][:12]  # spread across identities
    template = default_template(64)
    cond = _stub_condition()

    zero_mismatch = 0
    for frame in frames:
        result = process_frame(frame, cond, _StubGenerator("zero-mask"), template, log=None)
        if result.image.dtype != frame.image.dtype or not np.array_equal(result.image, frame.image):
            zero_mismatch += 1

    worst = 0.0
    for frame in frames:
        result = process_frame(frame, cond, _StubGenerator("echo"), template, log=None)
        hull = convex_hull_mask(frame.landmarks.points, frame.image.shape[1:]) > 0.5
        interior = binary_erosion(hull, iterations=4)
        if interior.any():
            worst = max(worst, float(np.abs(result.image - frame.image)[:, interior].max()))
    return {
        "zero_mask_mismatch_frames": zero_mismatch,
        "echo_interior_linf": worst,
        "frames": len(frames),
    }


def run_throughput(ctx):
    """Needs: model_path, corpus_dir, work_dir. Streams frames through the
    trained model, writes the stats file, and checks batch/stream parity."""
    g, loss_desc, _, _ = load_model_bundle(ctx["model_path"])
    template = default_template(g.resolution)
    named = [(n, f) for n, f in load_frames(ctx["corpus_dir"]) if f.landmarks is not None][:40]
    frames = [f for _, f in named]
    cond = prepare_target(loss_desc, frames[0].image, frames[0].landmarks, template,
                          source=named[0][0])
    stream_results, stats = process_stream(frames, cond, g, template, log=None)
    stats_path = os.path.join(ctx["work_dir"], "throughput-stats.txt")
    write_stats(stats_path, stats)
    batch_results = process_batch(frames, cond, g, template, log=None)
    parity = all(
        np.array_equal(a.image, b.image) and a.passthrough == b.passthrough
        for a, b in zip(stream_results, batch_results)
    )
    return {
        "fps": stats["fps"],
        "batch_stream_equal": int(parity),
        "stats_file_written": int(os.path.exists(stats_path)),
        "frames": stats["frames"],
    }


REGISTRY = {
    r.name: r
    for r in (
        ExperimentRecipe(
            "gradient-check",
            "analytic gradients of every loss term match finite differences",
            "seconds",
            (
                Bound("max_rel_err", "<", 1e-3),
                Bound("terms_checked", "==", 13),
                Bound("probes_kept", ">=", 200),
                Bound("kink_fraction", "<=", 0.2),
                Bound("seconds", "<", 120),
            ),
            run_gradient_check,
        ),
        ExperimentRecipe(
            "architecture-suite",
            "structural contracts of the generator/discriminator hold",
            "seconds",
            (
                Bound("bottleneck_len_desk", "==", 512),
                Bound("bottleneck_len_wide", "==", 1024),
                Bound("bottleneck_len_256", "==", 1024),
                Bound("skip_channels_desk", "==", 1),
                Bound("skip_channels_wide", "==", 1),
                Bound("skip_res_desk", "==", 16),
                Bound("skip_res_wide", "==", 32),
                Bound("up_res_pairs_256", "==", 6),
                Bound("img_head_max_abs", "<=", 1.0),
                Bound("mask_head_min", ">=", 0.0),
                Bound("mask_head_max", "<=", 1.0),
                Bound("disc_score_max_abs_dev", "<=", 0.5),
                Bound("in_mean_abs", "<", 1e-5),
                Bound("in_var_err", "<", 1e-3),
                Bound("shuffle_mismatch", "==", 0),
            ),
            run_architecture_suite,
        ),
        ExperimentRecipe(
            "deid-effect",
            "originals rank first in the gallery, de-identified outputs do not",
            "half-hour",
            (
                Bound("original_top1", ">=", 0.90),
                Bound("original_median_rank", "<=", 1.0),
                Bound("deid_median_rank", ">=", 10.0),
                Bound("distance_ratio", ">=", 2.0),
                Bound("gallery_size", "==", 64),
            ),
            run_deid_effect,
        ),
        ExperimentRecipe(
            "appearance",
            "outputs stay close to inputs inside the hull, exact outside",
            "minutes",
            (
                Bound("pixel_l1_inside_hull", "<=", 0.15),
                Bound("outside_hull_mismatch", "==", 0),
            ),
            run_appearance,
        ),
        ExperimentRecipe(
            "verification-drop",
            "de-identification collapses pair verification",
            "minutes",
            (
                Bound("tpr_clean", ">=", 0.9),
                Bound("tpr_deid", "<=", 0.3),
            ),
            run_verification,
        ),
        ExperimentRecipe(
            "lambda-monotonicity",
            "stronger repulsion strictly increases identity distance",
            "half-hour",
            (
                Bound("spearman", "==", 1.0, tolerance=1e-9),
                Bound("min_step", ">", 0.0),
                Bound("models", "==", 3),
            ),
            run_lambda_monotonicity,
        ),
        ExperimentRecipe(
            "ablation-orderings",
            "removing a component moves its metric the expected way",
            "half-hour",
            (
                Bound("no_mask_l1_minus_base", ">", 0.0),
                Bound("weak_lambda_dist_minus_base", "<", 0.0),
                Bound("no_mask_norm_mask_minus_base", ">", 0.0),
            ),
            run_ablation_orderings,
        ),
        ExperimentRecipe(
            "determinism",
            "seeded runs are bit-identical and resume is exact",
            "minutes",
            (
                Bound("checkpoint_bytes_equal", "==", 1),
                Bound("resume_bytes_equal", "==", 1),
            ),
            run_determinism,
        ),
        ExperimentRecipe(
            "pipeline-identity",
            "zero mask passes frames through bitwise; echo stays in warp bounds",
            "seconds",
            (
                Bound("zero_mask_mismatch_frames", "==", 0),
                Bound("echo_interior_linf", "<", 0.02),
            ),
            run_pipeline_identity,
        ),
        ExperimentRecipe(
            "throughput",
            "streaming meets the frame-rate floor with batch parity",
            "minutes",
            (
                Bound("fps", ">=", 5.0),
                Bound("batch_stream_equal", "==", 1),
                Bound("stats_file_written", "==", 1),
            ),
            run_throughput,
        ),
    )
}
