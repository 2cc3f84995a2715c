"""Flat `key = value` configuration with dotted namespaces.

UTF-8 text, `#` starts a comment, unknown keys are rejected. Every effective
config is echoed to <out>/resolved.cfg so a run can be reproduced from its
own output directory.
"""

from deid.descriptor import DescriptorConfig
from deid.errors import ConfigError
from deid.generator import VariantFlags
from deid.losses import LossWeights
from deid.training import AugmentSpec, TrainConfig

# key -> (type tag, default). Type tags: int, float, str.
SCHEMA = {
    "corpus.n_identities": ("int", 64),
    "corpus.per_identity": ("int", 45),
    "corpus.size": ("int", 64),
    "corpus.seed": ("int", 7),
    "corpus.holdout_per_identity": ("int", 5),
    "descriptor.role": ("str", "loss"),
    "descriptor.width": ("int", 16),
    "descriptor.embedding_dim": ("int", 64),
    "descriptor.seed": ("int", 100),
    "descriptor.steps": ("int", 2500),
    "descriptor.batch_size": ("int", 32),
    "descriptor.learning_rate": ("float", 1e-3),
    "descriptor.accuracy_floor": ("float", 0.85),
    "descriptor.resolution": ("int", 64),
    "train.resolution": ("int", 64),
    "train.batch_size": ("int", 16),
    "train.total_iters": ("int", 3000),
    "train.learning_rate": ("float", 1e-4),
    "train.adam_beta1": ("float", 0.5),
    "train.adam_beta2": ("float", 0.99),
    "train.seed": ("int", 1),
    "train.checkpoint_every": ("int", 1000),
    "train.threads": ("int", 1),
    "train.lambda_values": ("str", "1e-7,5e-7,1e-6,2e-6"),
    "train.lambda_gain": ("float", 2e8),
    "train.variants": ("str", ""),
    "train.data": ("str", ""),
    "train.out": ("str", ""),
    "train.descriptor": ("str", ""),
    "loss.alpha0": ("float", 0.5),
    "loss.alpha1": ("float", 0.5),
    "loss.alpha2": ("float", 0.5),
    "loss.alpha3": ("float", 0.5),
    "loss.alpha4": ("float", 3e-3),
    "loss.alpha5": ("float", 1e-2),
    "loss.lambda_id": ("float", 2e-6),
    "loss.mixup_alpha": ("float", 0.2),
    "aug.rotation_deg": ("float", 15.0),
    "aug.scale_min": ("float", 0.9),
    "aug.scale_max": ("float", 1.1),
    "aug.elastic_grid": ("int", 8),
    "aug.elastic_sigma": ("float", 2.0),
    "eval.far": ("float", 0.01),
    "eval.probes_per_identity": ("int", 3),
}


def _convert(key, raw):
    kind, _ = SCHEMA[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {kind}") from e


def default_config():
    return {k: default for k, (_, default) in SCHEMA.items()}


def parse_line(line, lineno, path="<config>"):
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    if "=" not in text:
        raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
    key, raw = (part.strip() for part in text.split("=", 1))
    if key not in SCHEMA:
        raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return key, _convert(key, raw)


def load_config(path=None, overrides=()):
    """defaults, then the file, then `key=value` override strings."""
    cfg = default_config()
    if path is not None:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                kv = parse_line(line, lineno, path)
                if kv:
                    cfg[kv[0]] = kv[1]
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override must be key=value, got {ov!r}")
        key, raw = (part.strip() for part in ov.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _convert(key, raw)
    return cfg


def write_config(path, cfg):
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(cfg):
            f.write(f"{key} = {cfg[key]}\n")


def parse_lambda_values(cfg):
    try:
        values = tuple(float(v) for v in str(cfg["train.lambda_values"]).split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"train.lambda_values: {cfg['train.lambda_values']!r}") from e
    if not values:
        raise ConfigError("train.lambda_values must list at least one value")
    return values


def variant_flags(cfg):
    names = [v.strip() for v in str(cfg["train.variants"]).split(",") if v.strip()]
    try:
        return VariantFlags.from_names(names)
    except Exception as e:
        raise ConfigError(str(e)) from e


def loss_weights(cfg):
    return LossWeights(
        alpha0=cfg["loss.alpha0"],
        alpha1=cfg["loss.alpha1"],
        alpha2=cfg["loss.alpha2"],
        alpha3=cfg["loss.alpha3"],
        alpha4=cfg["loss.alpha4"],
        alpha5=cfg["loss.alpha5"],
        lambda_id=cfg["loss.lambda_id"],
        mixup_alpha=cfg["loss.mixup_alpha"],
    )


def augment_spec(cfg):
    return AugmentSpec(
        rotation_deg=cfg["aug.rotation_deg"],
        scale_min=cfg["aug.scale_min"],
        scale_max=cfg["aug.scale_max"],
        elastic_grid=cfg["aug.elastic_grid"],
        elastic_sigma=cfg["aug.elastic_sigma"],
    )


def train_config(cfg):
    return TrainConfig(
        resolution=cfg["train.resolution"],
        batch_size=cfg["train.batch_size"],
        total_iters=cfg["train.total_iters"],
        learning_rate=cfg["train.learning_rate"],
        adam_beta1=cfg["train.adam_beta1"],
        adam_beta2=cfg["train.adam_beta2"],
        seed=cfg["train.seed"],
        checkpoint_every=cfg["train.checkpoint_every"],
        threads=cfg["train.threads"],
        lambda_values=parse_lambda_values(cfg),
        lambda_gain=cfg["train.lambda_gain"],
        weights=loss_weights(cfg),
        variants=variant_flags(cfg),
        augment=augment_spec(cfg),
        data_dir=cfg["train.data"],
        out_dir=cfg["train.out"],
        descriptor_path=cfg["train.descriptor"],
    )


def descriptor_config(cfg, role=None):
    return DescriptorConfig(
        resolution=cfg["descriptor.resolution"],
        width=cfg["descriptor.width"],
        embedding_dim=cfg["descriptor.embedding_dim"],
        role=role or cfg["descriptor.role"],
        seed=cfg["descriptor.seed"],
        steps=cfg["descriptor.steps"],
        batch_size=cfg["descriptor.batch_size"],
        learning_rate=cfg["descriptor.learning_rate"],
        accuracy_floor=cfg["descriptor.accuracy_floor"],
    )
