"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure (message names the error category),
2 malformed configuration or usage.
"""

import argparse
import os
import sys

import numpy as np

from deid import config as config_mod
from deid import evaluation, synth, training
from deid.canonical import default_template
from deid.data import AlignedFaceDataset
from deid.errors import ConfigError, DeidError

# the eval-role descriptor must differ from the loss-role one; these kick in
# for keys the user left untouched
EVAL_DESCRIPTOR_DEFAULTS = {
    "descriptor.width": 12,
    "descriptor.embedding_dim": 48,
    "descriptor.seed": 200,
    # verification-grade embeddings need the longer, smoother training run
    "descriptor.steps": 5000,
    "descriptor.batch_size": 64,
}


def _load_cfg(args, role=None):
    cfg = config_mod.load_config(getattr(args, "config", None), getattr(args, "set") or [])
    if role == "eval":
        explicit = _explicit_keys(args)
        for key, val in EVAL_DESCRIPTOR_DEFAULTS.items():
            if key not in explicit and cfg[key] == config_mod.SCHEMA[key][1]:
                cfg[key] = val
    return cfg


def _explicit_keys(args):
    keys = set()
    for ov in getattr(args, "set") or []:
        if "=" in ov:
            keys.add(ov.split("=", 1)[0].strip())
    return keys


def _echo_cfg(out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    config_mod.write_config(os.path.join(out_dir, "resolved.cfg"), cfg)


def cmd_make_synth(args):
    cfg = _load_cfg(args)
    _echo_cfg(args.out, cfg)
    rows = synth.make_corpus(
        args.out,
        n_identities=cfg["corpus.n_identities"],
        per_identity=cfg["corpus.per_identity"],
        size=cfg["corpus.size"],
        seed=cfg["corpus.seed"],
        holdout_per_identity=cfg["corpus.holdout_per_identity"],
    )
    print(f"wrote {len(rows)} frames to {args.out}")
    return 0


def cmd_train_descriptor(args):
    from deid.descriptor import train_descriptor

    cfg = _load_cfg(args, role=args.role)
    dcfg = config_mod.descriptor_config(cfg, role=args.role)
    train = AlignedFaceDataset(args.data, dcfg.resolution, split="train")
    heldout = AlignedFaceDataset(args.data, dcfg.resolution, split="heldout")
    net = train_descriptor(
        train.images * 2.0 - 1.0,
        train.labels,
        heldout.images * 2.0 - 1.0,
        heldout.labels,
        dcfg,
    )
    training.save_descriptor(net, args.out)
    _echo_cfg(os.path.dirname(os.path.abspath(args.out)), cfg)
    print(f"saved {args.role} descriptor to {args.out}")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args)
    tcfg = config_mod.train_config(cfg)
    if not tcfg.data_dir or not tcfg.out_dir:
        raise ConfigError("train.data and train.out must be set")
    _echo_cfg(tcfg.out_dir, cfg)
    state = training.train(tcfg, resume=args.resume)
    print(f"finished at iteration {state.iteration}; model at {tcfg.out_dir}/model.ckpt")
    return 0


def cmd_run(args):
    from deid.geometry import read_lmk
    from deid.imgio import imread
    from deid.pipeline import prepare_target, run_stream_to_dir

    cfg = _load_cfg(args)
    g, loss_desc, _, _ = training.load_model_bundle(args.model)
    template = default_template(g.resolution)
    lmk_path = os.path.splitext(args.target)[0] + ".lmk"
    if not os.path.exists(lmk_path):
        raise DeidError(f"target {args.target} needs a landmark sidecar {lmk_path}")
    cond = prepare_target(loss_desc, imread(args.target), read_lmk(lmk_path), template,
                          source=args.target)
    _echo_cfg(args.out, cfg)
    stats = run_stream_to_dir(args.frames, args.out, cond, g, template)
    print(
        f"processed {stats['frames']} frames ({stats['passthrough']} passed through), "
        f"{stats['fps']:.1f} fps, mean {stats['mean_ms']:.1f} ms, p95 {stats['p95_ms']:.1f} ms"
    )
    return 0


def _eval_setup(args):
    cfg = _load_cfg(args)
    g, loss_desc, _, _ = training.load_model_bundle(args.model)
    eval_desc = training.load_descriptor(args.eval_descriptor, expect_role="eval")
    probes_set = AlignedFaceDataset(args.data, g.resolution, split="train", log=None)
    heldout = AlignedFaceDataset(args.data, g.resolution, split="heldout", log=None)
    idx = evaluation.select_probes(probes_set.labels, cfg["eval.probes_per_identity"])
    return cfg, g, loss_desc, eval_desc, probes_set, heldout, idx


def cmd_eval_rank(args):
    cfg, g, loss_desc, eval_desc, probes_set, heldout, idx = _eval_setup(args)
    result = evaluation.rank_protocol(
        g, loss_desc, eval_desc,
        heldout.images, heldout.labels,
        probes_set.images[idx], probes_set.labels[idx],
    )
    _echo_cfg(args.out, cfg)
    with open(os.path.join(args.out, "ranks.csv"), "w", encoding="utf-8") as f:
        f.write("probe,original_rank,deid_rank\n")
        for i, (a, b) in enumerate(zip(result["original"].ranks, result["deid"].ranks)):
            f.write(f"{i},{a},{b}\n")
    for name in ("original", "deid"):
        r = result[name]
        print(
            f"{name}: median {r.median:.0f} mean {r.mean:.2f} sd {r.sd:.2f} "
            f"top1 {r.top1:.3f} (gallery {result['gallery_size']})"
        )
    print(f"id_distance {result['id_distance']:.4f} noise_floor {result['noise_floor']:.4f}")
    return 0


def cmd_eval_verify(args):
    cfg, g, loss_desc, eval_desc, probes_set, _, idx = _eval_setup(args)
    far = args.far if args.far is not None else cfg["eval.far"]
    clean, deid = evaluation.verify_protocol(
        g, loss_desc, eval_desc, probes_set.images[idx], probes_set.labels[idx],
        far, np.random.default_rng(cfg["train.seed"]),
    )
    _echo_cfg(args.out, cfg)
    with open(os.path.join(args.out, "verify.csv"), "w", encoding="utf-8") as f:
        f.write("condition,tpr,far,threshold,n_genuine,n_impostor\n")
        for name, r in (("clean", clean), ("deid", deid)):
            f.write(f"{name},{r.tpr},{r.far},{r.threshold},{r.n_genuine},{r.n_impostor}\n")
    print(f"clean TPR@FAR{far:g} = {clean.tpr:.3f}; de-identified = {deid.tpr:.3f}")
    return 0


def cmd_eval_tradeoff(args):
    cfg, g, loss_desc, eval_desc, probes_set, _, idx = _eval_setup(args)
    probes = probes_set.images[idx]
    outputs, masks = evaluation.deid_self(g, loss_desc, probes)
    pixel_l1, id_distance = evaluation.tradeoff_point(probes, outputs, eval_desc)
    _echo_cfg(args.out, cfg)
    with open(os.path.join(args.out, "tradeoff.csv"), "w", encoding="utf-8") as f:
        f.write("pixel_l1,id_distance,mean_mask\n")
        f.write(f"{pixel_l1},{id_distance},{float(masks.mean())}\n")
    print(f"pixel_l1 {pixel_l1:.4f} id_distance {id_distance:.4f} mean_mask {masks.mean():.4f}")
    return 0


def cmd_sweep_lambda(args):
    from dataclasses import replace

    cfg = _load_cfg(args)
    tcfg = config_mod.train_config(cfg)
    if not tcfg.data_dir or not tcfg.out_dir:
        raise ConfigError("train.data and train.out must be set")
    lambdas = sorted(float(v) for v in args.lambdas.split(","))
    eval_desc = training.load_descriptor(args.eval_descriptor, expect_role="eval")
    loss_desc = training.load_descriptor(tcfg.descriptor_path, expect_role="loss")
    dataset = AlignedFaceDataset(tcfg.data_dir, tcfg.resolution, split="train", log=None)
    _echo_cfg(tcfg.out_dir, cfg)
    paths = []
    for lam in lambdas:
        run_cfg = replace(
            tcfg,
            lambda_values=(lam,),
            out_dir=os.path.join(tcfg.out_dir, f"lambda-{lam:g}"),
        )
        training.train(run_cfg, dataset=dataset, descriptor=loss_desc)
        paths.append(os.path.join(run_cfg.out_dir, "model.ckpt"))
    idx = evaluation.select_probes(dataset.labels, cfg["eval.probes_per_identity"])
    dists = evaluation.lambda_sweep(paths, dataset.images[idx], eval_desc)
    with open(os.path.join(tcfg.out_dir, "sweep.csv"), "w", encoding="utf-8") as f:
        f.write("lambda,id_distance\n")
        for lam, d in zip(lambdas, dists):
            f.write(f"{lam},{d}\n")
    for lam, d in zip(lambdas, dists):
        print(f"lambda {lam:g}: id_distance {d:.4f}")
    return 0


def cmd_ablate(args):
    cfg = _load_cfg(args)
    tcfg = config_mod.train_config(cfg)
    if not tcfg.data_dir or not tcfg.out_dir:
        raise ConfigError("train.data and train.out must be set")
    eval_desc = training.load_descriptor(args.eval_descriptor, expect_role="eval")
    loss_desc = training.load_descriptor(tcfg.descriptor_path, expect_role="loss")
    dataset = AlignedFaceDataset(tcfg.data_dir, tcfg.resolution, split="train", log=None)
    idx = evaluation.select_probes(dataset.labels, cfg["eval.probes_per_identity"])
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    _echo_cfg(tcfg.out_dir, cfg)
    evaluation.run_ablation_suite(
        tcfg, variants, dataset, loss_desc, eval_desc, dataset.images[idx],
        out_csv=os.path.join(tcfg.out_dir, "ablations.csv"),
    )
    print(f"ablation table at {tcfg.out_dir}/ablations.csv")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deid",
        description="Feed-forward face de-identification: train, run and evaluate.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, func, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file (flat key = value)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        for flag, kw in flags.items():
            p.add_argument(flag, **kw)
        p.set_defaults(func=func)
        return p

    add("make-synth", cmd_make_synth, **{"--out": dict(required=True)})
    add(
        "train-descriptor",
        cmd_train_descriptor,
        **{
            "--data": dict(required=True),
            "--out": dict(required=True),
            "--role": dict(choices=("loss", "eval"), default="loss"),
        },
    )
    add(
        "train",
        cmd_train,
        **{"--resume": dict(default=None, help="checkpoint to resume from")},
    )
    add(
        "run",
        cmd_run,
        **{
            "--model": dict(required=True),
            "--target": dict(required=True),
            "--frames": dict(required=True),
            "--out": dict(required=True),
        },
    )
    for name, func in (
        ("eval-rank", cmd_eval_rank),
        ("eval-verify", cmd_eval_verify),
        ("eval-tradeoff", cmd_eval_tradeoff),
    ):
        p = add(
            name,
            func,
            **{
                "--model": dict(required=True),
                "--data": dict(required=True),
                "--eval-descriptor": dict(required=True, dest="eval_descriptor"),
                "--out": dict(required=True),
            },
        )
        if name == "eval-verify":
            p.add_argument("--far", type=float, default=None)
    add(
        "sweep-lambda",
        cmd_sweep_lambda,
        **{
            "--lambdas": dict(default="5e-7,1e-6,2e-6"),
            "--eval-descriptor": dict(required=True, dest="eval_descriptor"),
        },
    )
    add(
        "ablate",
        cmd_ablate,
        **{
            "--variants": dict(default="no_mask,weak_lambda,no_mask_norm"),
            "--eval-descriptor": dict(required=True, dest="eval_descriptor"),
        },
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DeidError as e:
        print(f"error[{type(e).__name__}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
