"""Procedural face corpus.

Renders smooth face-like images whose identity is fully determined by a
parameter vector (feature geometry and colors) while pose, illumination and
expression vary per image. Landmarks come from the same parameters, so they
are exact by construction. This stands in for photographic corpora, which are
out of scope.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from deid import canonical
from deid.geometry import LandmarkSet, SimilarityTransform

BG_RGB = (0.18, 0.20, 0.24)
# final bandlimit in pixels: edges must stay wider than a pixel so that
# bilinear warp round trips hold their interior error bound
BANDLIMIT_SIGMA = 2.5


@dataclass
class IdentityParams:
    label: int
    skin_rgb: tuple
    hair_rgb: tuple
    iris_rgb: tuple
    lip_rgb: tuple
    jaw_rx: float
    jaw_ry: float
    eye_dx: float
    eye_r: float
    brow_y: float
    brow_thick: float
    nose_len: float
    nose_w: float
    mouth_rx: float
    mouth_ry: float
    hairline_y: float
    blobs: list = field(default_factory=list)  # (cx, cy, sigma, (dr, dg, db))


@dataclass
class NuisanceParams:
    rotation: float = 0.0  # radians
    scale: float = 1.0
    shift: tuple = (0.0, 0.0)  # unit coords
    gain: float = 1.0
    side_light: float = 0.0
    mouth_open: float = 0.0  # [0, 1]
    mouth_curve: float = 0.0  # [-1, 1]


@dataclass
class SyntheticFaceSpec:
    identity: IdentityParams
    nuisance: NuisanceParams
    size: int = 64


def sample_identity(label, rng):
    r = rng.uniform(0.60, 0.90)
    g = r * rng.uniform(0.75, 0.90)
    b = g * rng.uniform(0.70, 0.90)
    return IdentityParams(
        label=label,
        skin_rgb=(r, g, b),
        hair_rgb=tuple(rng.uniform(0.05, 0.55, size=3)),
        iris_rgb=tuple(rng.uniform(0.10, 0.60, size=3)),
        lip_rgb=(rng.uniform(0.50, 0.80), rng.uniform(0.20, 0.35), rng.uniform(0.25, 0.40)),
        jaw_rx=rng.uniform(0.26, 0.33),
        jaw_ry=rng.uniform(0.34, 0.41),
        eye_dx=rng.uniform(0.12, 0.18),
        eye_r=rng.uniform(0.035, 0.060),
        brow_y=rng.uniform(0.33, 0.37),
        brow_thick=rng.uniform(0.008, 0.018),
        nose_len=rng.uniform(0.12, 0.17),
        nose_w=rng.uniform(0.020, 0.050),
        mouth_rx=rng.uniform(0.060, 0.110),
        mouth_ry=rng.uniform(0.025, 0.045),
        hairline_y=rng.uniform(0.16, 0.28),
        blobs=[
            (
                rng.uniform(0.3, 0.7),
                rng.uniform(0.35, 0.75),
                rng.uniform(0.05, 0.12),
                tuple(rng.uniform(-0.08, 0.08, size=3)),
            )
            for _ in range(3)
        ],
    )


def sample_nuisance(rng):
    return NuisanceParams(
        rotation=np.deg2rad(rng.uniform(-10.0, 10.0)),
        scale=rng.uniform(0.92, 1.08),
        shift=tuple(rng.uniform(-0.02, 0.02, size=2)),
        gain=rng.uniform(0.85, 1.15),
        side_light=rng.uniform(-0.25, 0.25),
        mouth_open=rng.uniform(0.0, 1.0),
        mouth_curve=rng.uniform(-1.0, 1.0),
    )


def pose_transform(nuisance, size):
    """Similarity transform from canonical pixel coords to posed pixel coords."""
    ctr = np.array([size / 2.0, size / 2.0])
    c, s = np.cos(nuisance.rotation), np.sin(nuisance.rotation)
    r = np.array([[c, -s], [s, c]])
    t = ctr + np.asarray(nuisance.shift) * size - nuisance.scale * (r @ ctr)
    return SimilarityTransform(nuisance.scale, nuisance.rotation, (float(t[0]), float(t[1])))


def face_layout(identity, nuisance):
    """68 landmarks in unit face coordinates for these parameters."""
    pts = canonical.base_landmarks()
    cx, cy = canonical.FACE_CENTER

    jaw = pts[0:17] - (cx, cy)
    jaw[:, 0] *= identity.jaw_rx / canonical.JAW_RX
    jaw[:, 1] *= identity.jaw_ry / canonical.JAW_RY
    pts[0:17] = jaw + (cx, cy)

    brow_shift = identity.brow_y - canonical.BROW_Y
    pts[17:27, 1] += brow_shift

    nose_bottom = canonical.NOSE_TOP + identity.nose_len
    pts[27:31, 1] = np.linspace(canonical.NOSE_TOP, nose_bottom, 4)
    base = pts[31:36]
    base[:, 0] = 0.5 + (base[:, 0] - 0.5) * (identity.nose_w / 0.035)
    base[:, 1] += nose_bottom - canonical.NOSE_BOTTOM
    pts[31:36] = base

    for block, sign in ((slice(36, 42), -1.0), (slice(42, 48), 1.0)):
        eye = pts[block]
        old_c = np.array([cx + sign * canonical.EYE_DX, canonical.EYE_Y])
        new_c = np.array([cx + sign * identity.eye_dx, canonical.EYE_Y])
        scale = identity.eye_r / canonical.EYE_RX
        pts[block] = (eye - old_c) * scale + new_c

    mx, my = canonical.MOUTH_CENTER
    for block, base_rx, base_ry in (
        (slice(48, 60), canonical.MOUTH_RX, canonical.MOUTH_RY),
        (slice(60, 68), canonical.INNER_RX, canonical.INNER_RY),
    ):
        lip = pts[block] - (mx, my)
        lip[:, 0] *= identity.mouth_rx / canonical.MOUTH_RX
        ry = identity.mouth_ry * (1.0 + 0.5 * nuisance.mouth_open)
        lip[:, 1] *= ry / base_ry * (base_ry / canonical.MOUTH_RY)
        # corners rise or drop with the expression
        lip[:, 1] -= nuisance.mouth_curve * 0.015 * (lip[:, 0] / identity.mouth_rx) ** 2
        pts[block] = lip + (mx, my)
    return pts


def _soft(dist_sq, aa):
    """1 inside the unit quadratic boundary, linear falloff of width aa."""
    d = np.sqrt(np.maximum(dist_sq, 0.0))
    return np.clip((1.0 + aa - d) / aa, 0.0, 1.0)


def _ellipse(u, v, cx, cy, rx, ry, aa_px):
    aa = max(aa_px / max(min(rx, ry), 1e-6), 1e-6)
    e = ((u - cx) / rx) ** 2 + ((v - cy) / ry) ** 2
    return _soft(e, aa)


def _over(base, color, alpha):
    for c in range(3):
        base[c] = base[c] * (1.0 - alpha) + color[c] * alpha
    return base


def synth_face(spec):
    """Render one face. Returns (image (3,S,S) float32 in [0,1], LandmarkSet,
    identity label). Deterministic for a fixed SyntheticFaceSpec."""
    idn, nui, size = spec.identity, spec.nuisance, spec.size
    cx, cy = canonical.FACE_CENTER
    tform = pose_transform(nui, size)
    inv = tform.inverse().matrix()

    cols, rows = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64))
    u = (inv[0, 0] * cols + inv[0, 1] * rows + inv[0, 2]) / size
    v = (inv[1, 0] * cols + inv[1, 1] * rows + inv[1, 2]) / size
    aa_px = 0.8 / (size * nui.scale)

    img = np.empty((3, size, size), dtype=np.float64)
    for c in range(3):
        img[c] = BG_RGB[c]

    # hair: a slightly larger ellipse behind the face
    hair = _ellipse(u, v, cx, cy - 0.02, idn.jaw_rx * 1.18, idn.jaw_ry * 1.22, aa_px)
    _over(img, idn.hair_rgb, hair)

    # skin with radial falloff and identity blobs
    face = _ellipse(u, v, cx, cy, idn.jaw_rx, idn.jaw_ry, aa_px)
    d2 = ((u - cx) / idn.jaw_rx) ** 2 + ((v - cy) / idn.jaw_ry) ** 2
    shade = 1.0 - 0.30 * np.clip(d2, 0.0, 1.0)
    skin = np.empty_like(img)
    for c in range(3):
        skin[c] = idn.skin_rgb[c] * shade
    for bx, by, sigma, tint in idn.blobs:
        g = np.exp(-((u - bx) ** 2 + (v - by) ** 2) / (2.0 * sigma**2))
        for c in range(3):
            skin[c] += tint[c] * g
    for c in range(3):
        img[c] = img[c] * (1.0 - face) + skin[c] * face

    # hairline across the top of the face
    fringe = face * np.clip((idn.hairline_y + 0.05 - v) / 0.05, 0.0, 1.0)
    _over(img, idn.hair_rgb, fringe)

    # brows
    t = np.clip((u - (cx - idn.eye_dx - 0.08)) / 0.16, 0.0, 1.0)
    arch_l = idn.brow_y - 0.02 * np.sin(np.pi * t)
    brow_color = tuple(c * 0.45 for c in idn.hair_rgb)
    for sign in (-1.0, 1.0):
        bcx = cx + sign * idn.eye_dx
        tt = np.clip((u - (bcx - 0.08)) / 0.16, 0.0, 1.0)
        arch = idn.brow_y - 0.02 * np.sin(np.pi * tt)
        band = np.clip((idn.brow_thick - np.abs(v - arch)) / aa_px / 2.0 + 0.5, 0.0, 1.0)
        span = np.clip((0.08 - np.abs(u - bcx)) / 0.02, 0.0, 1.0)
        _over(img, brow_color, band * span * face)

    # eyes: sclera, iris, pupil
    for sign in (-1.0, 1.0):
        ecx = cx + sign * idn.eye_dx
        sclera = _ellipse(u, v, ecx, canonical.EYE_Y, idn.eye_r, idn.eye_r * 0.45, aa_px)
        _over(img, (0.95, 0.95, 0.95), sclera)
        iris = _ellipse(u, v, ecx, canonical.EYE_Y, idn.eye_r * 0.45, idn.eye_r * 0.40, aa_px)
        _over(img, idn.iris_rgb, iris)
        pupil = _ellipse(u, v, ecx, canonical.EYE_Y, idn.eye_r * 0.16, idn.eye_r * 0.15, aa_px)
        _over(img, (0.05, 0.05, 0.05), pupil)

    # nose: darkened ridge plus base
    nose_bottom = canonical.NOSE_TOP + idn.nose_len
    seg_v = np.clip(v, canonical.NOSE_TOP, nose_bottom)
    ridge_d = np.sqrt((u - 0.5) ** 2 + (v - seg_v) ** 2)
    ridge = np.clip((idn.nose_w - ridge_d) / (idn.nose_w * 0.5), 0.0, 1.0)
    for c in range(3):
        img[c] *= 1.0 - 0.18 * ridge
    base_e = _ellipse(u, v, 0.5, nose_bottom + 0.03, idn.nose_w * 1.8, 0.018, aa_px)
    for c in range(3):
        img[c] *= 1.0 - 0.22 * base_e

    # mouth
    mx, my = canonical.MOUTH_CENTER
    curve = nui.mouth_curve * 0.015 * ((u - mx) / idn.mouth_rx) ** 2
    m_ry = idn.mouth_ry * (1.0 + 0.5 * nui.mouth_open)
    outer = _ellipse(u, v + curve, mx, my, idn.mouth_rx, m_ry, aa_px)
    _over(img, idn.lip_rgb, outer)
    if nui.mouth_open > 0.05:
        inner = _ellipse(
            u, v + curve, mx, my, idn.mouth_rx * 0.6, m_ry * 0.45 * nui.mouth_open, aa_px
        )
        _over(img, (0.08, 0.04, 0.05), inner)

    # illumination
    light = nui.gain * (1.0 + nui.side_light * 2.0 * (u - 0.5))
    img *= light
    np.clip(img, 0.0, 1.0, out=img)
    for c in range(3):
        img[c] = gaussian_filter(img[c], sigma=BANDLIMIT_SIGMA, mode="nearest")

    pts = face_layout(idn, nui) * size
    pts = tform.apply(pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    margin = 0.15 * (hi - lo)
    bbox = (
        float(lo[0] - margin[0]),
        float(lo[1] - margin[1]),
        float(hi[0] - lo[0] + 2 * margin[0]),
        float(hi[1] - lo[1] + 2 * margin[1]),
    )
    return img.astype(np.float32), LandmarkSet(points=pts, bbox=bbox), idn.label


def make_corpus(out_dir, n_identities, per_identity, size, seed, holdout_per_identity=5):
    """Write a labeled corpus: numbered PNG frames with .lmk sidecars and a
    labels.csv carrying (frame, identity, split). Returns the list of rows."""
    from deid.imgio import imwrite

    if n_identities < 2:
        raise ValueError("corpus needs at least 2 identities")
    if per_identity <= holdout_per_identity:
        raise ValueError(
            f"per_identity {per_identity} leaves no training images after "
            f"holding out {holdout_per_identity}"
        )
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    identities = [sample_identity(i, rng) for i in range(n_identities)]
    rows = []
    index = 0
    for idn in identities:
        for j in range(per_identity):
            spec = SyntheticFaceSpec(identity=idn, nuisance=sample_nuisance(rng), size=size)
            img, lmk, label = synth_face(spec)
            name = f"{index:06d}"
            imwrite(os.path.join(out_dir, name + ".png"), img)
            from deid.geometry import write_lmk

            write_lmk(os.path.join(out_dir, name + ".lmk"), lmk)
            split = "heldout" if j >= per_identity - holdout_per_identity else "train"
            rows.append((name + ".png", label, split))
            index += 1
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["frame", "identity", "split"])
        w.writerows(rows)
    with open(os.path.join(out_dir, "corpus.cfg"), "w", encoding="utf-8") as f:
        f.write(f"corpus.n_identities = {n_identities}\n")
        f.write(f"corpus.per_identity = {per_identity}\n")
        f.write(f"corpus.size = {size}\n")
        f.write(f"corpus.seed = {seed}\n")
        f.write(f"corpus.holdout_per_identity = {holdout_per_identity}\n")
    return rows
