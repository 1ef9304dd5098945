"""Unsupervised scene-category discovery over visual-word statistics.

The pipeline: extract two texture descriptors per image patch, quantize them
against a two-type word dictionary, pool saturated word counts over a 9-block
pyramid, link similar images in a sparse graph, and sample graph partitions
with per-category generative models pursued on the fly.  The category count
is inferred, not fixed.
"""

from .errors import ConfigError, FormatError, InputError, ScenecatError

__version__ = "0.1.0"

__all__ = ["ConfigError", "FormatError", "InputError", "ScenecatError", "__version__"]
