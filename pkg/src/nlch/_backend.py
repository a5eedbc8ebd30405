"""Select the hot-kernel implementation at import time.

The compiled extension is used when it was built; set
``NLCH_BACKEND=python`` to force the NumPy fallback.
"""
import os

from . import _pykernels

python_kernels = _pykernels

if os.environ.get("NLCH_BACKEND", "").lower() == "python":
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _ckernels as kernels  # type: ignore[attr-defined]

        NAME = "cython"
    except ImportError:
        kernels = _pykernels
        NAME = "python"

try:
    from . import _ckernels as compiled_kernels  # type: ignore[attr-defined]
except ImportError:
    compiled_kernels = None
