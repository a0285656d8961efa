"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``AORELAY_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

KIND_SP, KIND_RP, KIND_TABLE = _pykernels.KIND_SP, _pykernels.KIND_RP, _pykernels.KIND_TABLE

_compiled = None
if os.environ.get("AORELAY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    BACKEND = "cython"
    simulate = _compiled.simulate
    chain_sweep = _compiled.chain_sweep
else:
    BACKEND = "python"
    simulate = _pykernels.simulate
    chain_sweep = _pykernels.chain_sweep


def compiled_module():
    """The compiled extension module, or None when it was not built or is disabled."""
    return _compiled
