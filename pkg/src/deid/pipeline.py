"""Per-frame inference: align, generate, warp back, blend, hull-merge.

Frames are full images in [0,1]; the generator works on aligned crops in
[-1,1]. Every frame is processed independently with one fixed target
condition, so batch and streaming execution agree bitwise. Pixels outside the
landmark convex hull are never touched.
"""

import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from deid import descriptor as desc_mod
from deid.errors import DegenerateGeometryError, DeidError
from deid.geometry import LandmarkSet, convex_hull_mask, estimate_similarity, read_lmk, warp
from deid.imgio import imread, imwrite


@dataclass
class FrameRecord:
    index: int
    image: np.ndarray  # (3,H,W) float32 in [0,1]
    landmarks: LandmarkSet = None


@dataclass
class TargetCondition:
    pyramid: desc_mod.FacePyramid
    source: str


@dataclass
class FrameResult:
    index: int
    image: np.ndarray
    passthrough: bool
    latency_ms: float


def prepare_target(model, image, landmarks, template, source=""):
    """Align the target image to the descriptor resolution and run it through
    the descriptor once; the result conditions every frame of a stream."""
    t = estimate_similarity(landmarks.points, template.pixel_points())
    crop = warp(image, t, (model.resolution, model.resolution))
    x = torch.from_numpy(crop.astype(np.float32)) * 2.0 - 1.0
    with torch.no_grad():
        pyr = desc_mod.pyramid(model, x)
    return TargetCondition(pyramid=pyr, source=source)


def _fit_frame(frame, template, log=print):
    """Similarity fit and landmark hull for one frame, or None when the frame
    must pass through (no landmarks, or a degenerate fit)."""
    if frame.landmarks is None:
        if log:
            log(f"warning: frame {frame.index}: no landmarks, passed through")
        return None
    try:
        t = estimate_similarity(frame.landmarks.points, template.pixel_points())
        hull = convex_hull_mask(frame.landmarks.points, frame.image.shape[1:])
    except DegenerateGeometryError as e:
        if log:
            log(f"warning: frame {frame.index}: {e}, passed through")
        return None
    return t, hull


def _merge_frame(frame, t, hull, z_raw01, mask):
    """Inverse-warp the generated crop and mask into frame coordinates and
    blend, touching only pixels inside the hull."""
    h, w = frame.image.shape[1:]
    raw_frame = warp(z_raw01, t, (h, w), inverse=True)
    mask_frame = np.clip(warp(mask, t, (h, w), inverse=True)[0], 0.0, 1.0)
    m = mask_frame * hull
    merged = m * raw_frame + (1.0 - m) * frame.image
    return merged.astype(np.float32)


def process_frame(frame, cond, g, template, log=print):
    """Steps: similarity fit, warp to the aligned crop, generate, inverse-warp
    the raw output and mask, blend against the frame, restrict to the
    landmark hull. Frames without landmarks (or with a degenerate fit) pass
    through unchanged with a warning."""
    started = time.monotonic()
    fit = _fit_frame(frame, template, log=log)
    if fit is None:
        return FrameResult(frame.index, frame.image.copy(), True, _ms(started))
    t, hull = fit
    r = g.resolution
    crop01 = warp(frame.image, t, (r, r))
    x = torch.from_numpy(crop01.astype(np.float32)).unsqueeze(0) * 2.0 - 1.0
    with torch.no_grad():
        out = g(x, x, cond.pyramid.embedding)
    z_raw01 = ((out.z_raw[0] + 1.0) / 2.0).numpy()
    mask = out.mask[0].numpy()
    merged = _merge_frame(frame, t, hull, z_raw01, mask)
    return FrameResult(frame.index, merged, False, _ms(started))


def _ms(started):
    return (time.monotonic() - started) * 1000.0


def process_stream(frames, cond, g, template, log=print):
    """Process an ordered frame sequence; returns (results, stats dict)."""
    results = []
    for frame in frames:
        try:
            results.append(process_frame(frame, cond, g, template, log=log))
        except DeidError as e:
            if log:
                log(f"warning: frame {frame.index}: {type(e).__name__}: {e}, passed through")
            results.append(FrameResult(frame.index, frame.image.copy(), True, 0.0))
    lat = np.array([r.latency_ms for r in results]) if results else np.zeros(1)
    stats = {
        "frames": len(results),
        "passthrough": sum(1 for r in results if r.passthrough),
        "mean_ms": float(lat.mean()),
        "p95_ms": float(np.percentile(lat, 95)),
        "fps": 1000.0 / float(lat.mean()) if lat.mean() > 0 else float("inf"),
    }
    return results, stats


def process_batch(frames, cond, g, template, log=print):
    """Process a frame collection as one stateless batch job, returned in
    input order. Frames are evaluated independently and in reverse order, so
    any hidden cross-frame state would surface as a mismatch against
    process_stream; with none, outputs are bitwise equal. The frames are not
    stacked into one generator call on purpose: CPU convolution kernels pick
    a different arithmetic order per batch shape, which would break bitwise
    parity with the per-frame path."""
    results = [None] * len(frames)
    for i in reversed(range(len(frames))):
        results[i] = process_frame(frames[i], cond, g, template, log=log)
    return results


def write_stats(path, stats):
    with open(path, "w", encoding="utf-8") as f:
        for key in ("frames", "passthrough", "mean_ms", "p95_ms", "fps"):
            v = stats[key]
            f.write(f"{key} = {v:.3f}\n" if isinstance(v, float) else f"{key} = {v}\n")


def load_frames(frames_dir):
    """Read numbered frames (%06d.png) and their .lmk sidecars, sorted."""
    names = sorted(n for n in os.listdir(frames_dir) if n.endswith(".png"))
    frames = []
    for i, name in enumerate(names):
        img = imread(os.path.join(frames_dir, name))
        lmk_path = os.path.join(frames_dir, os.path.splitext(name)[0] + ".lmk")
        lmk = read_lmk(lmk_path) if os.path.exists(lmk_path) else None
        frames.append((name, FrameRecord(index=i, image=img, landmarks=lmk)))
    return frames


def run_stream_to_dir(frames_dir, out_dir, cond, g, template, log=print):
    """De-identify a frame directory into out_dir (mirroring names) and write
    a stats file. Returns the stats dict."""
    os.makedirs(out_dir, exist_ok=True)
    named = load_frames(frames_dir)
    results, stats = process_stream([f for _, f in named], cond, g, template, log=log)
    for (name, _), result in zip(named, results):
        imwrite(os.path.join(out_dir, name), result.image)
    write_stats(os.path.join(out_dir, "stats.txt"), stats)
    return stats
