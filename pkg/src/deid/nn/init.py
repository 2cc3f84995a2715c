"""Parameter initialization.

All weights are drawn from normal(0, 0.02) using a dedicated numpy PCG64
generator so the draw order is frozen by module registration order and the
result is reproducible independently of torch's global RNG. No module in this
package owns a bias tensor; init_params enforces that as a sanity check.
"""

import numpy as np
import torch

INIT_STD = 0.02


def init_params(module, seed):
    """Fill every parameter of `module` in registration order. Returns the
    module for chaining."""
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if "bias" in name:
                raise AssertionError(f"bias parameter found: {name}")
            vals = rng.normal(0.0, INIT_STD, size=tuple(p.shape))
            p.copy_(torch.from_numpy(vals).to(p.dtype))
    return module


def param_checksum(module):
    """Order-sensitive fingerprint of all parameters, for determinism tests."""
    h = 0
    for _, p in module.named_parameters():
        b = p.detach().cpu().numpy().astype(np.float64, copy=False).tobytes()
        h = hash((h, b))
    return h
