"""Pick the kernel implementation once, at import.

The compiled ``_ckernels`` extension is used when it is importable; setting
``GRIDLINK_PURE_PYTHON=1`` forces the numpy fallback.
"""

import logging
import os

log = logging.getLogger(__name__)

if os.environ.get("GRIDLINK_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as kernels
        BACKEND = "python"
        log.debug("compiled kernels unavailable; using numpy fallback")

__all__ = ["kernels", "BACKEND"]
