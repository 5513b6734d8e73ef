"""Zero-error capacity tools for finite-state additive noise channels."""

import json

from . import _core
from ._core import ZecError, bundled_names, entropy, run, zero_test

__version__ = _core.__version__


def analyze(channel, h_lin=None):
    """Capacity report for a bundled channel name or a channel JSON string."""
    return json.loads(_core.analyze(channel, h_lin))


__all__ = ["ZecError", "analyze", "bundled_names", "entropy", "run", "zero_test"]
