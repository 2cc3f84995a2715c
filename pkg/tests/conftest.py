"""Shared fixtures for the acceptance suite.

The acceptance context builds every artifact the experiment recipes need:
a synthetic corpus, frozen loss/eval descriptors, a fully trained model, a
repulsion-strength sweep and the ablation table. That build takes tens of
minutes, so it runs once per session and can be kept between sessions by
exporting DEID_TEST_CACHE=/some/dir (a stamp file records the build recipe;
changing any build parameter forces a rebuild).
"""

import csv
import hashlib
import os
import shutil
import time

import pytest

from deid import evaluation
from deid.data import AlignedFaceDataset
from deid.descriptor import DescriptorConfig, train_descriptor
from deid.synth import make_corpus
from deid.training import TrainConfig, load_descriptor, save_descriptor, train

CORPUS = dict(n_identities=64, per_identity=10, size=64, seed=17, holdout_per_identity=2)
LOSS_DESC = DescriptorConfig(role="loss")
EVAL_DESC = DescriptorConfig(width=12, embedding_dim=48, seed=200, role="eval",
                             steps=5000, batch_size=64)
BASE_ITERS = 3000
SIDE_ITERS = 600  # sweep and ablation runs
SWEEP_LAMBDAS = (5e-7, 1e-6, 2e-6)
ABLATION_VARIANTS = ("no_mask", "weak_lambda", "no_mask_norm")

_ACCEPTANCE_REPORTS = []


def _fingerprint():
    parts = [
        repr(sorted(CORPUS.items())), repr(LOSS_DESC), repr(EVAL_DESC),
        str(BASE_ITERS), str(SIDE_ITERS), repr(SWEEP_LAMBDAS), repr(ABLATION_VARIANTS),
    ]
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:16]


def _build_artifacts(root, log):
    t0 = time.monotonic()

    def stamp(msg):
        log(f"[build {time.monotonic() - t0:6.0f}s] {msg}")

    corpus_dir = os.path.join(root, "corpus")
    make_corpus(corpus_dir, **CORPUS)
    stamp(f"corpus: {CORPUS['n_identities']} identities x {CORPUS['per_identity']} frames")

    train_set = AlignedFaceDataset(corpus_dir, 64, split="train", log=None)
    heldout_set = AlignedFaceDataset(corpus_dir, 64, split="heldout", log=None)

    loss_net = train_descriptor(
        train_set.images * 2.0 - 1.0, train_set.labels,
        heldout_set.images * 2.0 - 1.0, heldout_set.labels, LOSS_DESC, log=log,
    )
    save_descriptor(loss_net, os.path.join(root, "loss.ckpt"))
    eval_net = train_descriptor(
        train_set.images * 2.0 - 1.0, train_set.labels,
        heldout_set.images * 2.0 - 1.0, heldout_set.labels, EVAL_DESC, log=log,
    )
    save_descriptor(eval_net, os.path.join(root, "eval.ckpt"))
    stamp("descriptors trained")

    base_cfg = TrainConfig(
        total_iters=BASE_ITERS, checkpoint_every=1000,
        data_dir=corpus_dir, out_dir=os.path.join(root, "model"),
    )
    train(base_cfg, dataset=train_set, descriptor=loss_net, log=None)
    stamp(f"base model: {BASE_ITERS} iterations")

    for lam in SWEEP_LAMBDAS:
        cfg = TrainConfig(
            total_iters=SIDE_ITERS, checkpoint_every=SIDE_ITERS, lambda_values=(lam,),
            data_dir=corpus_dir, out_dir=os.path.join(root, f"sweep-{lam:g}"),
        )
        train(cfg, dataset=train_set, descriptor=loss_net, log=None)
        stamp(f"sweep model: lambda {lam:g}")

    abl_cfg = TrainConfig(
        total_iters=SIDE_ITERS, checkpoint_every=SIDE_ITERS,
        data_dir=corpus_dir, out_dir=os.path.join(root, "ablate"),
    )
    idx = evaluation.select_probes(train_set.labels, 2)
    evaluation.run_ablation_suite(
        abl_cfg, list(ABLATION_VARIANTS), train_set, loss_net, eval_net,
        train_set.images[idx], out_csv=os.path.join(root, "ablations.csv"), log=log,
    )
    stamp("ablation table done")


def _read_ablation_rows(path):
    rows = {}
    with open(path, newline="", encoding="utf-8") as f:
        for r in csv.DictReader(f):
            if r["error"]:
                rows[r["variant"]] = {"error": r["error"]}
            else:
                rows[r["variant"]] = {
                    "pixel_l1": float(r["pixel_l1"]),
                    "id_distance": float(r["id_distance"]),
                    "mean_mask": float(r["mean_mask"]),
                    "error": "",
                }
    return rows


def _load_ctx(root, work_dir):
    corpus_dir = os.path.join(root, "corpus")
    return {
        "corpus_dir": corpus_dir,
        "train_set": AlignedFaceDataset(corpus_dir, 64, split="train", log=None),
        "heldout_set": AlignedFaceDataset(corpus_dir, 64, split="heldout", log=None),
        "loss_descriptor": load_descriptor(os.path.join(root, "loss.ckpt"), expect_role="loss"),
        "eval_descriptor": load_descriptor(os.path.join(root, "eval.ckpt"), expect_role="eval"),
        "model_path": os.path.join(root, "model", "model.ckpt"),
        "sweep_paths": [os.path.join(root, f"sweep-{lam:g}", "model.ckpt") for lam in SWEEP_LAMBDAS],
        "ablation_rows": _read_ablation_rows(os.path.join(root, "ablations.csv")),
        "work_dir": work_dir,
    }


@pytest.fixture(scope="session")
def acceptance_ctx(tmp_path_factory):
    cache = os.environ.get("DEID_TEST_CACHE", "")
    root = os.path.abspath(cache) if cache else str(tmp_path_factory.mktemp("acceptance"))
    os.makedirs(root, exist_ok=True)
    log_path = os.path.join(root, "build.log")

    def log(msg):
        print(msg)
        with open(log_path, "a", encoding="utf-8") as f:
            f.write(f"{msg}\n")

    stamp_path = os.path.join(root, "STAMP")
    want = _fingerprint()
    have = ""
    if os.path.exists(stamp_path):
        with open(stamp_path, encoding="utf-8") as f:
            have = f.read().strip()
    if have != want:
        for name in os.listdir(root):
            if name == "build.log":
                continue
            path = os.path.join(root, name)
            shutil.rmtree(path) if os.path.isdir(path) else os.remove(path)
        _build_artifacts(root, log)
        with open(stamp_path, "w", encoding="utf-8") as f:
            f.write(want)
    else:
        log(f"reusing acceptance artifacts at {root}")
    work_dir = os.path.join(root, "work")
    shutil.rmtree(work_dir, ignore_errors=True)
    os.makedirs(work_dir)
    return _load_ctx(root, work_dir)


@pytest.fixture(scope="session")
def acceptance_reports():
    return _ACCEPTANCE_REPORTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_REPORTS:
        return
    terminalreporter.section("acceptance recipes")
    for report in _ACCEPTANCE_REPORTS:
        terminalreporter.write_line(report.summary())
