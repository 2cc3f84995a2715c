"""PNG image I/O. Arrays are (3, H, W) float32 in [0, 1]."""

import numpy as np
from PIL import Image

from deid.errors import ShapeError


def imread(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def imwrite(path, img):
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeError(f"imwrite expects (3,H,W), got {a.shape}")
    q = np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path)
