from deid.nn import blocks, init, ops

__all__ = ["blocks", "init", "ops"]
