"""Face alignment and compositing.

Similarity-transform estimation onto a canonical face, bilinear warping with
replicated borders, convex-hull region masks, per-pixel blending, and forward
difference spatial gradients. Images are (C, H, W) arrays; blend and
spatial_gradients work on numpy arrays and torch tensors alike so they can
also sit inside the differentiable training graph.
"""

from dataclasses import dataclass

import numpy as np
import scipy.ndimage
import scipy.spatial

from deid.errors import DegenerateGeometryError, MaskRangeError, ShapeError


@dataclass
class LandmarkSet:
    """68 facial points in pixel coordinates plus the detector's face box."""

    points: np.ndarray  # (68, 2) float64, columns x, y
    bbox: tuple  # (left, top, width, height)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (68, 2):
            raise ShapeError(f"landmark set needs (68,2) points, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateGeometryError("non-finite landmark coordinates")
        left, top, width, height = self.bbox
        if width <= 0 or height <= 0:
            raise DegenerateGeometryError(f"bbox must have positive size, got {self.bbox}")


@dataclass
class SimilarityTransform:
    """p -> scale * R(rotation) @ p + translation."""

    scale: float
    rotation: float  # radians
    translation: tuple  # (tx, ty)

    def matrix(self):
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        m = np.array(
            [
                [self.scale * c, -self.scale * s, self.translation[0]],
                [self.scale * s, self.scale * c, self.translation[1]],
            ],
            dtype=np.float64,
        )
        return m

    def inverse(self):
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        tx, ty = self.translation
        inv_s = 1.0 / self.scale
        # x = (1/s) R^T (y - t)
        itx = -inv_s * (c * tx + s * ty)
        ity = -inv_s * (-s * tx + c * ty)
        return SimilarityTransform(inv_s, -self.rotation, (itx, ity))

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        m = self.matrix()
        return pts @ m[:, :2].T + m[:, 2]


@dataclass
class FaceTemplate:
    """Canonical landmark layout in the unit square plus the crop size."""

    points: np.ndarray  # (68, 2) in [0, 1]
    crop_size: int

    def pixel_points(self):
        return np.asarray(self.points, dtype=np.float64) * self.crop_size


def _as_points(obj):
    if isinstance(obj, LandmarkSet):
        return obj.points
    if isinstance(obj, FaceTemplate):
        return obj.pixel_points()
    return np.asarray(obj, dtype=np.float64)


def estimate_similarity(src, dst):
    """Least-squares similarity transform mapping src points onto dst points
    (Umeyama closed form restricted to scale, rotation, translation)."""
    sp = _as_points(src)
    dp = _as_points(dst)
    if sp.shape != dp.shape or sp.ndim != 2 or sp.shape[1] != 2:
        raise ShapeError(f"point sets must both be (N,2), got {sp.shape} and {dp.shape}")
    if sp.shape[0] < 2:
        raise DegenerateGeometryError("need at least 2 points to fit a similarity")
    mu_s = sp.mean(axis=0)
    mu_d = dp.mean(axis=0)
    cs = sp - mu_s
    cd = dp - mu_d
    var_s = (cs**2).sum(axis=1).mean()
    if var_s < 1e-18:
        raise DegenerateGeometryError("all source points coincident")
    cov = cd.T @ cs / sp.shape[0]
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u @ vt))
    if sign == 0:
        sign = 1.0
    s_diag = np.array([1.0, sign])
    r = u @ np.diag(s_diag) @ vt
    scale = (d * s_diag).sum() / var_s
    rotation = float(np.arctan2(r[1, 0], r[0, 0]))
    trans = mu_d - scale * (r @ mu_s)
    return SimilarityTransform(float(scale), rotation, (float(trans[0]), float(trans[1])))


def warp(image, transform, out_size, inverse=False):
    """Resample image under the similarity transform.

    image: (C, H, W) numpy array. out_size: (H, W). With inverse=False the
    transform is applied to the image (output pixel p samples the input at
    T^-1 p); inverse=True applies T^-1. Bilinear interpolation, out-of-range
    samples replicate the border.
    """
    img = np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"warp expects (C,H,W), got {img.shape}")
    oh, ow = out_size
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"output size must be positive, got {out_size}")
    t = transform.inverse() if not inverse else transform
    m = t.matrix()
    cols, rows = np.meshgrid(np.arange(ow, dtype=np.float64), np.arange(oh, dtype=np.float64))
    src_x = m[0, 0] * cols + m[0, 1] * rows + m[0, 2]
    src_y = m[1, 0] * cols + m[1, 1] * rows + m[1, 2]
    coords = np.stack([src_y.ravel(), src_x.ravel()])
    out = np.empty((img.shape[0], oh, ow), dtype=img.dtype)
    for c in range(img.shape[0]):
        sampled = scipy.ndimage.map_coordinates(
            img[c].astype(np.float64), coords, order=1, mode="nearest"
        )
        out[c] = sampled.reshape(oh, ow).astype(img.dtype)
    return out


def convex_hull_mask(points, size):
    """Binary (H, W) mask, 1 on and inside the convex hull of the points."""
    pts = _as_points(points)
    if pts.shape[0] < 3:
        raise DegenerateGeometryError(f"hull needs >= 3 points, got {pts.shape[0]}")
    try:
        hull = scipy.spatial.ConvexHull(pts)
    except scipy.spatial.QhullError as e:
        raise DegenerateGeometryError(f"degenerate hull: {e}") from e
    h, w = size
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    # hull.equations rows are (nx, ny, offset) with nx*x + ny*y + offset <= 0 inside
    mask = np.ones((h, w), dtype=bool)
    for nx, ny, off in hull.equations:
        mask &= nx * cols + ny * rows + off <= 1e-9
    return mask.astype(np.float32)


def blend(input_img, raw_img, mask):
    """out = mask * raw_img + (1 - mask) * input_img, elementwise.

    Works on numpy arrays and torch tensors; with a torch mask the blend stays
    differentiable. mask must lie in [0, 1].
    """
    if input_img.shape != raw_img.shape:
        raise ShapeError(f"blend images must agree, got {input_img.shape} vs {raw_img.shape}")
    if hasattr(mask, "detach"):
        lo = float(mask.detach().min())
        hi = float(mask.detach().max())
    else:
        lo = float(np.min(mask))
        hi = float(np.max(mask))
    if lo < 0.0 or hi > 1.0:
        raise MaskRangeError(f"mask values outside [0,1]: min={lo} max={hi}")
    return mask * raw_img + (1 - mask) * input_img


def spatial_gradients(x):
    """Forward differences: dx shape (..., H, W-1), dy shape (..., H-1, W)."""
    if x.shape[-1] < 2 or x.shape[-2] < 2:
        raise ShapeError(f"spatial_gradients needs H,W >= 2, got {tuple(x.shape)}")
    dx = x[..., :, 1:] - x[..., :, :-1]
    dy = x[..., 1:, :] - x[..., :-1, :]
    return dx, dy


def read_lmk(path):
    """Parse a landmark file: line 1 `bbox left top width height`, lines 2-69
    `x y` in pixel coordinates."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("bbox "):
        raise ShapeError(f"{path}: first line must be 'bbox left top width height'")
    parts = lines[0].split()
    if len(parts) != 5:
        raise ShapeError(f"{path}: malformed bbox line: {lines[0]!r}")
    bbox = tuple(float(v) for v in parts[1:])
    if len(lines) != 69:
        raise ShapeError(f"{path}: expected 68 point lines, got {len(lines) - 1}")
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=np.float64)
    if pts.shape != (68, 2):
        raise ShapeError(f"{path}: point lines must each hold 'x y'")
    return LandmarkSet(points=pts, bbox=bbox)


def write_lmk(path, landmarks):
    with open(path, "w", encoding="utf-8") as f:
        left, top, width, height = landmarks.bbox
        f.write(f"bbox {left:.3f} {top:.3f} {width:.3f} {height:.3f}\n")
        for x, y in landmarks.points:
            f.write(f"{x:.4f} {y:.4f}\n")
