"""Evaluation protocols against hand-built oracles: gallery construction,
ranking, fixed-FAR verification, probe selection and distance floors."""

import numpy as np
import pytest
import torch

from deid import evaluation
from deid.descriptor import DescriptorConfig, build_descriptor
from deid.errors import EvaluationError
from deid.evaluation import (
    Gallery,
    build_gallery,
    embed_images,
    identity_rank,
    rank_stats,
    select_probes,
    self_distance_floor,
    spearman,
    tradeoff_point,
    verification_tpr,
)


def _unit_rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def test_identity_rank_matches_exhaustive_sort():
    rng = np.random.default_rng(120)
    gallery = Gallery(labels=list(range(6)), refs=_unit_rows(rng.normal(size=(6, 8))),
                      model_id="m")
    for _ in range(20):
        probe = _unit_rows(rng.normal(size=8))
        sims = gallery.refs @ probe
        for label in gallery.labels:
            better = int((sims > sims[label]).sum())
            assert identity_rank(gallery, probe, label) == better + 1
    with pytest.raises(EvaluationError):
        identity_rank(gallery, probe, 99)


def test_identity_rank_breaks_ties_by_label_order():
    refs = _unit_rows([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    gallery = Gallery(labels=[3, 5, 7], refs=refs, model_id="m")
    probe = np.array([1.0, 0.0])
    assert identity_rank(gallery, probe, 3) == 1
    assert identity_rank(gallery, probe, 5) == 2


def test_rank_stats_summary_values():
    stats = rank_stats([1, 1, 4, 10])
    assert stats.median == pytest.approx(2.5)
    assert stats.mean == pytest.approx(4.0)
    assert stats.top1 == pytest.approx(0.5)
    assert stats.sd == pytest.approx(np.std([1, 1, 4, 10]))


def test_verification_tpr_hand_oracle():
    # 10 impostors, far=0.2 -> k=2, threshold = 3rd largest impostor = 0.7
    impostors = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0]
    genuine = [0.95, 0.75, 0.71, 0.65, 0.2]
    r = verification_tpr(genuine, impostors, far=0.2)
    assert r.threshold == pytest.approx(0.7)
    assert r.tpr == pytest.approx(3 / 5)  # strictly above 0.7: 0.95, 0.75, 0.71
    assert r.n_genuine == 5 and r.n_impostor == 10


def test_verification_tpr_monotone_in_far():
    rng = np.random.default_rng(121)
    genuine = rng.normal(0.7, 0.1, size=200)
    impostors = rng.normal(0.0, 0.2, size=500)
    tprs = [verification_tpr(genuine, impostors, far).tpr for far in (0.01, 0.05, 0.2)]
    assert tprs[0] <= tprs[1] <= tprs[2]


def test_verification_tpr_guards():
    with pytest.raises(EvaluationError):
        verification_tpr([0.5], [0.1] * 10, far=1.5)
    with pytest.raises(EvaluationError):
        verification_tpr([], [0.1] * 10, far=0.2)
    with pytest.raises(EvaluationError, match="impostor pairs"):
        verification_tpr([0.5], [0.1] * 10, far=0.01)  # k would be 0


def test_select_probes_takes_first_per_identity():
    labels = [2, 0, 0, 1, 2, 0, 1, 2]
    idx = select_probes(labels, 2)
    assert idx.tolist() == [1, 2, 3, 6, 0, 4]


def test_self_distance_floor_oracle():
    e = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 4.0]])
    labels = [0, 0, 1]
    # only the identity-0 pair: mean |(0,0)-(1,1)| = 1.0; identity 1 has one image
    assert self_distance_floor(e, labels) == pytest.approx(1.0)
    with pytest.raises(EvaluationError):
        self_distance_floor(e, [0, 1, 2])


def test_spearman_orderings():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [5, -1, 30]) < 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_embed_images_and_gallery_contract():
    desc = build_descriptor(DescriptorConfig(resolution=16, width=4, embedding_dim=8,
                                             seed=122, role="eval"), n_classes=3)
    rng = np.random.default_rng(123)
    images = rng.uniform(0, 1, size=(6, 3, 16, 16)).astype(np.float32)
    labels = np.array([0, 0, 1, 1, 2, 2])
    emb = embed_images(desc, images)
    assert emb.shape == (6, 8)
    assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-5)
    gallery = build_gallery(desc, images, labels)
    assert gallery.labels == [0, 1, 2]
    want0 = emb[:2].mean(axis=0)
    want0 /= np.linalg.norm(want0)
    assert np.allclose(gallery.refs[0], want0, atol=1e-6)


def test_build_gallery_requires_eval_role():
    desc = build_descriptor(DescriptorConfig(resolution=16, width=4, embedding_dim=8,
                                             seed=124), n_classes=2)
    with pytest.raises(EvaluationError):
        build_gallery(desc, np.zeros((2, 3, 16, 16), dtype=np.float32), [0, 1])


def test_tradeoff_point_oracle():
    desc = build_descriptor(DescriptorConfig(resolution=16, width=4, embedding_dim=8,
                                             seed=125, role="eval"), n_classes=2)
    rng = np.random.default_rng(126)
    a = rng.uniform(0, 1, size=(3, 3, 16, 16)).astype(np.float32)
    b = np.clip(a + 0.1, 0, 1).astype(np.float32)
    pixel_l1, id_distance = tradeoff_point(a, b, desc)
    assert pixel_l1 == pytest.approx(np.abs(a - b).mean(), rel=1e-6)
    want = np.abs(embed_images(desc, a) - embed_images(desc, b)).mean()
    assert id_distance == pytest.approx(want, rel=1e-6)
    assert tradeoff_point(a, a, desc) == (0.0, 0.0)
    with pytest.raises(EvaluationError):
        tradeoff_point(np.zeros((0, 3, 16, 16)), np.zeros((0, 3, 16, 16)), desc)


def test_verify_protocol_impostor_count_and_chance_case():
    # identical embeddings for every image: deid == clean, tpr driven by ties
    class FlatDescriptor:
        resolution = 16
        role = "eval"
        model_id = "flat"

        def features(self, x):
            n = x.shape[0]
            return None, None, None, None, torch.ones(n, 4)

        def emb(self, pooled):
            return torch.ones(pooled.shape[0], 4)

    class IdentityGenerator:
        resolution = 16

        def __call__(self, x_distorted, x_aligned, cond):
            from deid.generator import GeneratorOutput

            return GeneratorOutput(z_raw=x_distorted, mask=torch.ones(x_distorted.shape[0], 1, 16, 16),
                                   z_masked=x_distorted)

    rng = np.random.default_rng(127)
    images = rng.uniform(0, 1, size=(8, 3, 16, 16)).astype(np.float32)
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])

    # loss-role flat descriptor for conditioning
    loss_flat = FlatDescriptor()
    loss_flat.role = "loss"
    clean, deid = evaluation.verify_protocol(
        IdentityGenerator(), loss_flat, FlatDescriptor(), images, labels,
        far=0.01, rng=np.random.default_rng(128),
    )
    assert clean.n_impostor == max(200, int(np.ceil(2.0 / 0.01)))
    # all scores identical: nothing is strictly above the threshold
    assert clean.tpr == 0.0 and deid.tpr == 0.0


def test_lambda_sweep_needs_two_checkpoints():
    with pytest.raises(EvaluationError):
        evaluation.lambda_sweep(["one.ckpt"], np.zeros((1, 3, 16, 16)), None)
