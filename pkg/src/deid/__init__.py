"""Feed-forward face de-identification.

Renders a face so that a descriptor network no longer matches it to its
identity while pose, expression and illumination survive, then blends the
rendered crop back into the original frame through a predicted mask.
"""

__version__ = "0.1.0"
