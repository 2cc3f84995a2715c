"""Quantitative protocols: gallery ranking, pair verification at fixed FAR,
pixel/identity tradeoff points, lambda sweeps and the ablation suite.

Everything here scores with the evaluation descriptor (role "eval"); the
generator's conditioning still comes from the loss descriptor carried inside
each model checkpoint. De-identification in these protocols is self-targeted:
each probe is pushed away from its own identity embedding, matching how the
generator is trained.
"""

import os
from dataclasses import dataclass

import numpy as np
import torch

from deid import descriptor as desc_mod
from deid.errors import EvaluationError


@dataclass
class Gallery:
    labels: list
    refs: np.ndarray  # (N, E), rows L2-normalized
    model_id: str


@dataclass
class RankResult:
    ranks: list
    median: float
    mean: float
    sd: float
    top1: float


@dataclass
class VerifyResult:
    tpr: float
    far: float
    threshold: float
    n_genuine: int
    n_impostor: int


def embed_images(model, images01, batch=256):
    """Evaluation-descriptor embeddings of (N,3,R,R) [0,1] crops -> (N,E)."""
    outs = []
    with torch.no_grad():
        for i in range(0, len(images01), batch):
            x = torch.from_numpy(images01[i : i + batch]) * 2.0 - 1.0
            outs.append(desc_mod.pyramid(model, x).embedding.numpy())
    return np.concatenate(outs, axis=0)


def build_gallery(model, images01, labels):
    """One reference per identity: the renormalized mean of its embeddings."""
    desc_mod.require_role(model, "eval")
    labels = np.asarray(labels)
    emb = embed_images(model, images01)
    refs, out_labels = [], []
    for label in np.unique(labels):
        e = emb[labels == label].mean(axis=0)
        refs.append(e / max(np.linalg.norm(e), 1e-12))
        out_labels.append(int(label))
    return Gallery(labels=out_labels, refs=np.stack(refs), model_id=model.model_id)


def identity_rank(gallery, probe_embedding, true_label):
    """1-based rank of the true identity under descending cosine similarity;
    ties broken by label order."""
    if true_label not in gallery.labels:
        raise EvaluationError(f"label {true_label} not in gallery")
    sims = gallery.refs @ np.asarray(probe_embedding)
    order = sorted(range(len(gallery.labels)), key=lambda i: (-sims[i], gallery.labels[i]))
    return 1 + [gallery.labels[i] for i in order].index(true_label)


def rank_stats(ranks):
    r = np.asarray(ranks, dtype=np.float64)
    return RankResult(
        ranks=list(ranks),
        median=float(np.median(r)),
        mean=float(r.mean()),
        sd=float(r.std()),
        top1=float((r == 1).mean()),
    )


def verification_tpr(genuine_scores, impostor_scores, far):
    """Threshold at the (k+1)-th largest impostor score with k = floor(far*n),
    acceptance strictly above; TPR of genuine pairs at that threshold."""
    if not 0.0 < far < 1.0:
        raise EvaluationError(f"far must be in (0,1), got {far}")
    gen = np.asarray(genuine_scores, dtype=np.float64)
    imp = np.sort(np.asarray(impostor_scores, dtype=np.float64))[::-1]
    if len(gen) == 0 or len(imp) == 0:
        raise EvaluationError("both genuine and impostor pairs are required")
    k = int(np.floor(far * len(imp)))
    if k < 1:
        need = int(np.ceil(1.0 / far))
        raise EvaluationError(
            f"far={far} needs at least {need} impostor pairs, got {len(imp)}"
        )
    threshold = float(imp[k])  # (k+1)-th largest
    tpr = float((gen > threshold).mean())
    return VerifyResult(
        tpr=tpr, far=far, threshold=threshold, n_genuine=len(gen), n_impostor=len(imp)
    )


def select_probes(labels, per_identity):
    """Indices of the first per_identity images of each identity."""
    labels = np.asarray(labels)
    idx = []
    for label in np.unique(labels):
        idx.extend(np.flatnonzero(labels == label)[:per_identity])
    return np.asarray(idx, dtype=np.int64)


def deid_self(g, loss_descriptor, images01, batch=32):
    """De-identify aligned crops with each probe's own embedding as the
    repulsion target. Returns (outputs01, masks) as numpy arrays."""
    desc_mod.require_role(loss_descriptor, "loss")
    outs, masks = [], []
    with torch.no_grad():
        for i in range(0, len(images01), batch):
            x = torch.from_numpy(images01[i : i + batch]) * 2.0 - 1.0
            cond = desc_mod.pyramid(loss_descriptor, x).embedding
            out = g(x, x, cond)
            outs.append(((out.z_masked + 1.0) / 2.0).clamp(0.0, 1.0).numpy())
            masks.append(out.mask.numpy())
    return np.concatenate(outs, axis=0), np.concatenate(masks, axis=0)


def tradeoff_point(inputs01, outputs01, eval_model):
    """(mean per-pixel L1, mean embedding distance) between paired crops."""
    if len(inputs01) == 0:
        raise EvaluationError("tradeoff_point needs a non-empty pair set")
    desc_mod.require_role(eval_model, "eval")
    pixel_l1 = float(np.abs(np.asarray(inputs01) - np.asarray(outputs01)).mean())
    e_in = embed_images(eval_model, inputs01)
    e_out = embed_images(eval_model, outputs01)
    id_distance = float(np.abs(e_in - e_out).mean())
    return pixel_l1, id_distance


def self_distance_floor(embeddings, labels):
    """Mean within-identity pairwise embedding distance: what 'same person,
    different shot' looks like to the evaluation descriptor."""
    labels = np.asarray(labels)
    dists = []
    for label in np.unique(labels):
        e = embeddings[labels == label]
        for i in range(len(e)):
            for j in range(i + 1, len(e)):
                dists.append(np.abs(e[i] - e[j]).mean())
    if not dists:
        raise EvaluationError("self-distance floor needs >= 2 images per identity")
    return float(np.mean(dists))


def rank_protocol(g, loss_descriptor, eval_model, gallery_images01, gallery_labels,
                  probe_images01, probe_labels):
    """Rank originals and de-identified probes against a gallery; also return
    embedding distances and the self-distance noise floor."""
    gallery = build_gallery(eval_model, gallery_images01, gallery_labels)
    e_orig = embed_images(eval_model, probe_images01)
    deid01, _ = deid_self(g, loss_descriptor, probe_images01)
    e_deid = embed_images(eval_model, deid01)
    orig_ranks = [identity_rank(gallery, e, l) for e, l in zip(e_orig, probe_labels)]
    deid_ranks = [identity_rank(gallery, e, l) for e, l in zip(e_deid, probe_labels)]
    id_distances = np.abs(e_orig - e_deid).mean(axis=1)
    return {
        "original": rank_stats(orig_ranks),
        "deid": rank_stats(deid_ranks),
        "id_distance": float(id_distances.mean()),
        "noise_floor": self_distance_floor(e_orig, probe_labels),
        "gallery_size": len(gallery.labels),
        "deid01": deid01,
    }


def verify_protocol(g, loss_descriptor, eval_model, images01, labels, far, rng):
    """Genuine/impostor verification, clean vs de-identified second images."""
    labels = np.asarray(labels)
    by_label = {int(l): np.flatnonzero(labels == l) for l in np.unique(labels)}
    genuine = []
    for l, idx in sorted(by_label.items()):
        if len(idx) >= 2:
            genuine.append((idx[0], idx[1]))
    if not genuine:
        raise EvaluationError("no identity has two images; cannot form genuine pairs")
    all_labels = sorted(by_label)
    impostor = []
    target_count = max(200, int(np.ceil(2.0 / far)))
    while len(impostor) < target_count:
        a, b = rng.choice(len(all_labels), size=2, replace=False)
        impostor.append((by_label[all_labels[a]][0], by_label[all_labels[b]][0]))

    emb = embed_images(eval_model, images01)
    second_idx = np.array([b for _, b in genuine])
    deid01, _ = deid_self(g, loss_descriptor, images01[second_idx])
    emb_deid_second = embed_images(eval_model, deid01)

    def cos(a, b):
        return float(np.dot(a, b))

    gen_clean = [cos(emb[a], emb[b]) for a, b in genuine]
    gen_deid = [cos(emb[a], e) for (a, _), e in zip(genuine, emb_deid_second)]
    imp_scores = [cos(emb[a], emb[b]) for a, b in impostor]
    return (
        verification_tpr(gen_clean, imp_scores, far),
        verification_tpr(gen_deid, imp_scores, far),
    )


def lambda_sweep(checkpoint_paths, probe_images01, eval_model):
    """Mean id_distance per checkpoint, in the order given (ascending lambda).
    All checkpoints must share one architecture."""
    from deid.training import load_model_bundle

    if len(checkpoint_paths) < 2:
        raise EvaluationError("lambda sweep needs at least 2 checkpoints")
    archs, dists = [], []
    e_in = embed_images(eval_model, probe_images01)
    for path in checkpoint_paths:
        g, loss_desc, arch, _ = load_model_bundle(path)
        archs.append(arch)
        deid01, _ = deid_self(g, loss_desc, probe_images01)
        e_out = embed_images(eval_model, deid01)
        dists.append(float(np.abs(e_in - e_out).mean()))
    if len(set(archs)) != 1:
        raise EvaluationError(f"mismatched architectures across sweep: {archs}")
    return dists


def spearman(xs, ys):
    """Spearman rank correlation (no tie handling; inputs are distinct)."""
    xr = np.argsort(np.argsort(xs))
    yr = np.argsort(np.argsort(ys))
    xc = xr - xr.mean()
    yc = yr - yr.mean()
    return float((xc * yc).sum() / np.sqrt((xc**2).sum() * (yc**2).sum()))


def run_ablation_suite(base_config, variant_names, dataset, loss_descriptor, eval_model,
                       probe_images01, out_csv=None, log=print):
    """Train one model per variant (plus the base) and measure tradeoff points
    and mean mask values. Per-variant failures are isolated into the report."""
    from dataclasses import replace

    from deid.generator import VariantFlags
    from deid.training import train

    rows = []
    for name in ["base"] + list(variant_names):
        variants = VariantFlags() if name == "base" else VariantFlags.from_names([name])
        config = replace(
            base_config,
            variants=variants,
            out_dir=os.path.join(base_config.out_dir, name),
        )
        try:
            state = train(config, dataset=dataset, descriptor=loss_descriptor, log=None)
            outputs01, masks = deid_self(state.generator, loss_descriptor, probe_images01)
            pixel_l1, id_distance = tradeoff_point(probe_images01, outputs01, eval_model)
            rows.append(
                {
                    "variant": name,
                    "pixel_l1": pixel_l1,
                    "id_distance": id_distance,
                    "mean_mask": float(masks.mean()),
                    "error": "",
                }
            )
            if log:
                log(
                    f"ablation {name}: pixel_l1 {pixel_l1:.4f} id_distance "
                    f"{id_distance:.4f} mean_mask {rows[-1]['mean_mask']:.4f}"
                )
        except Exception as e:  # noqa: BLE001 - per-variant isolation is the contract
            rows.append(
                {"variant": name, "pixel_l1": "", "id_distance": "", "mean_mask": "",
                 "error": f"{type(e).__name__}: {e}"}
            )
            if log:
                log(f"ablation {name} failed: {rows[-1]['error']}")
    if out_csv:
        with open(out_csv, "w", encoding="utf-8") as f:
            f.write("variant,pixel_l1,id_distance,mean_mask,error\n")
            for r in rows:
                f.write(
                    f"{r['variant']},{r['pixel_l1']},{r['id_distance']},"
                    f"{r['mean_mask']},{r['error']}\n"
                )
    return rows
