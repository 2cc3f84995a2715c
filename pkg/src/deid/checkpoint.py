"""Single-file checkpoint format.

A UTF-8 manifest followed by a raw little-endian payload:

    deidckpt 1
    arch <hex digest>
    meta <one-line json>
    tensors <count>
    <name> <dtype> <dims as d0,d1,... or () for scalars> <offset> <nbytes>
    ...
    payload
    <raw bytes>

Offsets are relative to the byte right after the "payload" line. Tensor
names are sorted, so equal contents give bit-identical files.
"""

import json

import numpy as np

from deid.errors import CheckpointError

MAGIC = "deidckpt 1"
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def _shape_str(shape):
    return ",".join(str(d) for d in shape) if shape else "()"


def _parse_shape(s):
    return () if s == "()" else tuple(int(d) for d in s.split(","))


def save_checkpoint(path, tensors, arch, meta):
    """tensors: name -> numpy array (or torch tensor). meta: json-able dict."""
    arrays = {}
    for name, t in tensors.items():
        a = t.detach().cpu().numpy() if hasattr(t, "detach") else np.asarray(t)
        if a.dtype.name not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {a.dtype.name} for tensor {name}")
        # ascontiguousarray promotes 0-d to 1-d, which would change the shape
        arrays[name] = np.ascontiguousarray(a) if a.ndim else a
    meta_line = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    if "\n" in meta_line:
        raise CheckpointError("meta must serialize to a single line")
    lines = [MAGIC, f"arch {arch}", f"meta {meta_line}", f"tensors {len(arrays)}"]
    offset = 0
    payload = []
    for name in sorted(arrays):
        a = arrays[name]
        raw = a.astype(_DTYPES[a.dtype.name]).tobytes()
        lines.append(f"{name} {a.dtype.name} {_shape_str(a.shape)} {offset} {len(raw)}")
        payload.append(raw)
        offset += len(raw)
    lines.append("payload")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))
        for raw in payload:
            f.write(raw)


def load_checkpoint(path, expect_arch=None):
    """Returns (tensors dict of numpy arrays, arch, meta dict)."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    head_end = blob.find(b"payload\n")
    if head_end < 0:
        raise CheckpointError(f"{path}: no payload marker; not a checkpoint file")
    header = blob[:head_end].decode("utf-8").splitlines()
    payload = blob[head_end + len(b"payload\n") :]
    if not header or header[0] != MAGIC:
        raise CheckpointError(f"{path}: bad magic line {header[0] if header else '<empty>'!r}")
    if not header[1].startswith("arch ") or not header[2].startswith("meta "):
        raise CheckpointError(f"{path}: malformed header")
    arch = header[1][len("arch ") :]
    meta = json.loads(header[2][len("meta ") :])
    count = int(header[3].split()[1])
    entries = header[4:]
    if len(entries) != count:
        raise CheckpointError(f"{path}: manifest lists {len(entries)} tensors, expected {count}")
    if expect_arch is not None and arch != expect_arch:
        raise CheckpointError(
            f"{path}: architecture mismatch: checkpoint {arch}, expected {expect_arch}"
        )
    tensors = {}
    for line in entries:
        try:
            name, dtype, shape_s, off_s, nbytes_s = line.split()
            shape = _parse_shape(shape_s)
            off, nbytes = int(off_s), int(nbytes_s)
        except ValueError as e:
            raise CheckpointError(f"{path}: malformed manifest line {line!r}") from e
        if dtype not in _DTYPES:
            raise CheckpointError(f"{path}: unsupported dtype {dtype} for {name}")
        raw = payload[off : off + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: truncated payload for {name}")
        a = np.frombuffer(raw, dtype=_DTYPES[dtype]).reshape(shape)
        tensors[name] = a.astype(dtype, copy=True)
    return tensors, arch, meta


def module_tensors(module, prefix):
    import torch  # local: checkpoint stays importable without a model in hand

    with torch.no_grad():
        return {f"{prefix}.{n}": p.detach().cpu().numpy().copy() for n, p in module.named_parameters()}


def load_module(module, tensors, prefix):
    import torch

    state = {}
    for name, p in module.named_parameters():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint missing tensor {key}")
        a = tensors[key]
        if tuple(a.shape) != tuple(p.shape):
            raise CheckpointError(
                f"tensor {key} has shape {tuple(a.shape)}, module expects {tuple(p.shape)}"
            )
        state[name] = torch.from_numpy(a).to(p.dtype)
    module.load_state_dict(state, strict=True)
    return module


def optimizer_tensors(opt, prefix):
    out = {}
    for i, st in opt.state_dict()["state"].items():
        for key, val in st.items():
            a = val.detach().cpu().numpy() if hasattr(val, "detach") else np.asarray(val, dtype=np.float64)
            out[f"{prefix}.{i}.{key}"] = a
    return out


def load_optimizer(opt, tensors, prefix):
    """Restore Adam moments saved by optimizer_tensors. The optimizer must
    have been freshly constructed over the same parameter list."""
    import torch

    sd = opt.state_dict()
    state = {}
    found = [k for k in tensors if k.startswith(prefix + ".")]
    for key in found:
        rest = key[len(prefix) + 1 :]
        idx_s, field = rest.split(".", 1)
        entry = state.setdefault(int(idx_s), {})
        a = tensors[key]
        t = torch.from_numpy(a.copy())
        if field == "step":
            entry[field] = t.to(torch.float32).reshape(())
        else:
            entry[field] = t.to(torch.float32)
    sd["state"] = state
    opt.load_state_dict(sd)
    return opt
