"""Corpus loading: numbered PNG frames with .lmk sidecars, aligned to the
canonical template at a fixed crop resolution."""

import csv
import os

import numpy as np

from deid import canonical
from deid.errors import ConfigError
from deid.geometry import estimate_similarity, read_lmk, warp
from deid.imgio import imread


class AlignedFaceDataset:
    """In-memory aligned crops in [0,1].

    Reads labels.csv (frame, identity, split) when present; frames without a
    .lmk sidecar are skipped with a warning. `split` filters to one split.
    """

    def __init__(self, corpus_dir, resolution, template=None, split=None, log=print):
        if template is None:
            template = canonical.default_template(resolution)
        self.resolution = resolution
        self.template = template
        rows = self._index(corpus_dir)
        if split is not None:
            rows = [r for r in rows if r[2] == split]
        if not rows:
            raise ConfigError(f"no usable frames in {corpus_dir} (split={split})")
        images, labels, names, landmarks = [], [], [], []
        tpl = template.pixel_points()
        for name, label, _ in rows:
            lmk_path = os.path.join(corpus_dir, os.path.splitext(name)[0] + ".lmk")
            if not os.path.exists(lmk_path):
                if log:
                    log(f"warning: {name}: no landmark sidecar, skipped")
                continue
            lmk = read_lmk(lmk_path)
            img = imread(os.path.join(corpus_dir, name))
            t = estimate_similarity(lmk.points, tpl)
            images.append(warp(img, t, (resolution, resolution)))
            labels.append(label)
            names.append(name)
            landmarks.append(lmk)
        self.images = np.stack(images).astype(np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.names = names
        self.landmarks = landmarks

    @staticmethod
    def _index(corpus_dir):
        if not os.path.isdir(corpus_dir):
            raise ConfigError(f"corpus directory not found: {corpus_dir}")
        labels_path = os.path.join(corpus_dir, "labels.csv")
        if os.path.exists(labels_path):
            with open(labels_path, newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                header = next(reader)
                if header[:3] != ["frame", "identity", "split"]:
                    raise ConfigError(f"{labels_path}: unexpected header {header}")
                return [(name, int(label), split) for name, label, split in reader]
        names = sorted(n for n in os.listdir(corpus_dir) if n.endswith(".png"))
        return [(n, -1, "train") for n in names]

    def __len__(self):
        return len(self.labels)
