"""Face descriptor: a small strided conv classifier exposing multi-scale
activations and an L2-normalized identity embedding.

Two instances with different roles are used throughout: a "loss" descriptor
that conditions the generator and drives the attract/repel term, and a
separate "eval" descriptor (different width, embedding size and seed) that
scores results. The two must never be swapped; every pyramid carries its
model id and consumers check it.
"""

import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from deid.errors import DescriptorMismatchError, EvaluationError, ShapeError, TrainingFailure
from deid.nn import ops
from deid.nn.blocks import Conv, Linear
from deid.nn.init import init_params


@dataclass
class FacePyramid:
    """Activations at input scale s, s/2, s/4, s/16 plus the embedding."""

    a1: torch.Tensor
    a2: torch.Tensor
    a3: torch.Tensor
    a4: torch.Tensor
    embedding: torch.Tensor
    model_id: str


@dataclass
class DescriptorConfig:
    resolution: int = 64
    width: int = 16
    embedding_dim: int = 64
    role: str = "loss"
    seed: int = 100
    steps: int = 2500
    batch_size: int = 32
    learning_rate: float = 1e-3
    accuracy_floor: float = 0.85


class DescriptorNet(nn.Module):
    """conv stem plus four strided convs; taps at strides 1, 2, 4, 16.

    No normalization layers: per-channel color statistics are the point of a
    recognition net, and instance norm would erase them.
    """

    def __init__(self, resolution, width, embedding_dim, n_classes, role, seed):
        super().__init__()
        w = width
        self.stem = Conv(3, w, 3)
        self.down1 = Conv(w, 2 * w, 3, stride=2)
        self.down2 = Conv(2 * w, 4 * w, 3, stride=2)
        self.down3 = Conv(4 * w, 4 * w, 3, stride=2)
        self.down4 = Conv(4 * w, 6 * w, 3, stride=2)
        self.emb = Linear(6 * w, embedding_dim)
        self.cls = Linear(6 * w, n_classes)
        self.resolution = resolution
        self.width = width
        self.embedding_dim = embedding_dim
        self.n_classes = n_classes
        self.role = role
        self.seed = seed

    @property
    def model_id(self):
        return (
            f"descriptor/{self.role}/r{self.resolution}/w{self.width}"
            f"/e{self.embedding_dim}/c{self.n_classes}/s{self.seed}"
        )

    def arch_descriptor(self):
        return self.model_id

    def features(self, x):
        a1 = ops.lrelu(self.stem(x), 0.1)
        a2 = ops.lrelu(self.down1(a1), 0.1)
        a3 = ops.lrelu(self.down2(a2), 0.1)
        h = ops.lrelu(self.down3(a3), 0.1)
        a4 = ops.lrelu(self.down4(h), 0.1)
        pooled = a4.mean(dim=(2, 3))
        return a1, a2, a3, a4, pooled

    def forward(self, x):
        return self.features(x)


def build_descriptor(config, n_classes):
    net = DescriptorNet(
        config.resolution,
        config.width,
        config.embedding_dim,
        n_classes,
        config.role,
        config.seed,
    )
    return init_params(net, config.seed)


def pyramid(model, image):
    """FacePyramid of an image (3,S,S) or batch (N,3,S,S) in [-1,1]."""
    x = image if image.dim() == 4 else image.unsqueeze(0)
    if x.shape[1] != 3 or x.shape[2] != model.resolution or x.shape[3] != model.resolution:
        raise ShapeError(
            f"descriptor expects (3,{model.resolution},{model.resolution}), got {tuple(image.shape)}"
        )
    a1, a2, a3, a4, pooled = model.features(x)
    e = model.emb(pooled)
    e = e / torch.linalg.vector_norm(e, dim=1, keepdim=True).clamp_min(1e-12)
    if image.dim() == 3:
        a1, a2, a3, a4, e = a1[0], a2[0], a3[0], a4[0], e[0]
    return FacePyramid(a1=a1, a2=a2, a3=a3, a4=a4, embedding=e, model_id=model.model_id)


def embedding_distance(p, q):
    """Mean absolute difference of the two embeddings (L1 scaled by 1/E)."""
    if p.model_id != q.model_id:
        raise DescriptorMismatchError(f"pyramids from different models: {p.model_id} vs {q.model_id}")
    ep, eq = p.embedding, q.embedding
    if ep.shape != eq.shape:
        raise ShapeError(f"embedding dims differ: {tuple(ep.shape)} vs {tuple(eq.shape)}")
    return float((ep - eq).abs().mean().detach())


def require_role(model, role):
    if model.role != role:
        raise EvaluationError(f"descriptor role {model.role!r} where {role!r} is required")


def accuracy(model, images, labels, batch_size=256):
    """Top-1 accuracy on (N,3,S,S) [-1,1] images."""
    correct = 0
    with torch.no_grad():
        for i in range(0, len(labels), batch_size):
            x = torch.as_tensor(images[i : i + batch_size])
            *_, pooled = model.features(x)
            pred = model.cls(pooled).argmax(dim=1).numpy()
            correct += int((pred == labels[i : i + batch_size]).sum())
    return correct / len(labels)


def train_descriptor(train_images, train_labels, heldout_images, heldout_labels, config, log=print):
    """Train the classifier; returns the trained net.

    Images: (N,3,S,S) float32 in [-1,1]; labels: int array. Deterministic for
    a fixed config.seed in single-threaded mode. Raises TrainingFailure when
    the held-out top-1 accuracy ends below config.accuracy_floor.
    """
    from deid.errors import ConfigError

    train_labels = np.asarray(train_labels)
    heldout_labels = np.asarray(heldout_labels)
    classes = np.unique(train_labels)
    if len(classes) < 2:
        raise ConfigError(f"descriptor training needs >= 2 identity classes, got {len(classes)}")
    n_classes = int(classes.max()) + 1
    model = build_descriptor(config, n_classes)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n = len(train_labels)
    t0 = time.monotonic()
    for step in range(config.steps):
        idx = rng.integers(0, n, size=config.batch_size)
        x = torch.as_tensor(train_images[idx])
        y = torch.as_tensor(train_labels[idx], dtype=torch.long)
        *_, pooled = model.features(x)
        loss = F.cross_entropy(model.cls(pooled), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log and (step + 1) % max(1, config.steps // 5) == 0:
            log(
                f"descriptor[{config.role}] step {step + 1}/{config.steps} "
                f"loss {float(loss.detach()):.4f} ({time.monotonic() - t0:.0f}s)"
            )
    acc = accuracy(model, heldout_images, heldout_labels)
    if log:
        log(f"descriptor[{config.role}] held-out top-1 accuracy {acc:.3f}")
    if acc < config.accuracy_floor:
        raise TrainingFailure(
            f"descriptor accuracy {acc:.3f} below floor {config.accuracy_floor:.3f}"
        )
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
