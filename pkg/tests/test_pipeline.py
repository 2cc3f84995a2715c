"""Frame pipeline: hull confinement, passthrough handling, stream/batch
parity and the directory runner. Uses stub generators so the geometry is
tested independently of training."""

import numpy as np
import pytest
import torch

from deid import canonical
from deid.descriptor import DescriptorConfig, build_descriptor
from deid.generator import GeneratorOutput
from deid.geometry import convex_hull_mask, write_lmk
from deid.imgio import imread, imwrite
from deid.pipeline import (
    FrameRecord,
    load_frames,
    prepare_target,
    process_batch,
    process_frame,
    process_stream,
    run_stream_to_dir,
    write_stats,
)
from deid.synth import NuisanceParams, SyntheticFaceSpec, sample_identity, sample_nuisance, synth_face


class StubGenerator:
    """Shape-compatible generator with scripted raw/mask outputs."""

    def __init__(self, mode, resolution=64):
        self.mode = mode
        self.resolution = resolution

    def __call__(self, x_distorted, x_aligned, cond):
        n = x_distorted.shape[0]
        r = self.resolution
        if self.mode == "zero-mask":
            z_raw = -x_distorted
            mask = torch.zeros(n, 1, r, r)
        elif self.mode == "echo":
            z_raw = x_distorted
            mask = torch.ones(n, 1, r, r)
        else:  # invert inside a full mask
            z_raw = -x_distorted
            mask = torch.ones(n, 1, r, r)
        return GeneratorOutput(z_raw=z_raw, mask=mask, z_masked=z_raw)


def _cond():
    from deid.descriptor import FacePyramid
    from deid.pipeline import TargetCondition

    return TargetCondition(
        pyramid=FacePyramid(a1=torch.zeros(1), a2=torch.zeros(1), a3=torch.zeros(1),
                            a4=torch.zeros(1), embedding=torch.zeros(8), model_id="stub"),
        source="stub",
    )


@pytest.fixture(scope="module")
def face_frames():
    rng = np.random.default_rng(110)
    idn = sample_identity(0, rng)
    frames = []
    for i in range(3):
        img, lmk, _ = synth_face(SyntheticFaceSpec(idn, sample_nuisance(rng), size=64))
        frames.append(FrameRecord(index=i, image=img, landmarks=lmk))
    return frames


@pytest.fixture(scope="module")
def template():
    return canonical.default_template(64)


def test_zero_mask_leaves_every_pixel_untouched(face_frames, template):
    g = StubGenerator("zero-mask")
    for frame in face_frames:
        result = process_frame(frame, _cond(), g, template, log=None)
        assert not result.passthrough
        assert np.array_equal(result.image, frame.image)


def test_full_mask_only_edits_inside_the_hull(face_frames, template):
    g = StubGenerator("invert")
    frame = face_frames[0]
    result = process_frame(frame, _cond(), g, template, log=None)
    hull = convex_hull_mask(frame.landmarks.points, frame.image.shape[1:])
    outside = hull == 0.0
    assert np.array_equal(result.image[:, outside], frame.image[:, outside])
    inside = hull == 1.0
    assert np.abs(result.image[:, inside] - frame.image[:, inside]).max() > 0.1


def test_echo_generator_round_trips_within_warp_tolerance(face_frames, template):
    from scipy.ndimage import binary_erosion

    g = StubGenerator("echo")
    frame = face_frames[1]
    result = process_frame(frame, _cond(), g, template, log=None)
    hull = convex_hull_mask(frame.landmarks.points, frame.image.shape[1:]) > 0.5
    interior = binary_erosion(hull, iterations=4)
    assert interior.any()
    assert np.abs(result.image[:, interior] - frame.image[:, interior]).max() < 0.02


def test_frames_without_landmarks_pass_through_with_warning(face_frames, template):
    g = StubGenerator("invert")
    bare = FrameRecord(index=9, image=face_frames[0].image, landmarks=None)
    warnings = []
    result = process_frame(bare, _cond(), g, template, log=warnings.append)
    assert result.passthrough
    assert np.array_equal(result.image, bare.image)
    assert any("frame 9" in w for w in warnings)


def test_stream_and_batch_agree_bitwise(face_frames, template):
    g = StubGenerator("invert")
    stream_results, stats = process_stream(face_frames, _cond(), g, template, log=None)
    batch_results = process_batch(face_frames, _cond(), g, template, log=None)
    assert stats["frames"] == len(face_frames)
    assert stats["passthrough"] == 0
    for a, b in zip(stream_results, batch_results):
        assert a.index == b.index
        assert np.array_equal(a.image, b.image)


def test_prepare_target_embeds_the_aligned_crop(face_frames, template):
    desc = build_descriptor(DescriptorConfig(width=4, embedding_dim=8, seed=111), n_classes=2)
    frame = face_frames[0]
    cond = prepare_target(desc, frame.image, frame.landmarks, template, source="t.png")
    assert cond.source == "t.png"
    assert cond.pyramid.embedding.shape == (8,)
    assert cond.pyramid.model_id == desc.model_id


def test_run_stream_to_dir_mirrors_names_and_writes_stats(face_frames, template, tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i, frame in enumerate(face_frames):
        imwrite(src / f"{i:06d}.png", frame.image)
        write_lmk(src / f"{i:06d}.lmk", frame.landmarks)
    imwrite(src / "000099.png", face_frames[0].image)  # no sidecar: passthrough

    out = tmp_path / "out"
    stats = run_stream_to_dir(src, out, _cond(), StubGenerator("zero-mask"),
                              template, log=None)
    assert stats["frames"] == 4
    assert stats["passthrough"] == 1
    assert stats["fps"] > 0
    for name in ("000000.png", "000001.png", "000002.png", "000099.png", "stats.txt"):
        assert (out / name).exists()
    text = (out / "stats.txt").read_text(encoding="utf-8")
    assert "fps = " in text and "frames = 4" in text
    # zero-mask output frames decode back to the originals
    a = imread(src / "000000.png")
    b = imread(out / "000000.png")
    assert np.array_equal(a, b)


def test_load_frames_orders_and_pairs_sidecars(face_frames, tmp_path):
    imwrite(tmp_path / "000001.png", face_frames[0].image)
    imwrite(tmp_path / "000000.png", face_frames[1].image)
    write_lmk(tmp_path / "000000.lmk", face_frames[1].landmarks)
    named = load_frames(tmp_path)
    assert [n for n, _ in named] == ["000000.png", "000001.png"]
    assert named[0][1].landmarks is not None
    assert named[1][1].landmarks is None


def test_write_stats_formats_counts_and_floats(tmp_path):
    write_stats(tmp_path / "s.txt", {"frames": 3, "passthrough": 0, "mean_ms": 12.3456,
                                     "p95_ms": 20.0, "fps": 81.0})
    text = (tmp_path / "s.txt").read_text(encoding="utf-8")
    assert "frames = 3\n" in text
    assert "mean_ms = 12.346\n" in text
