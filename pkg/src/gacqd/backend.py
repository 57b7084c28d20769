"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
otherwise used transparently. Set GACQD_BACKEND=python or GACQD_BACKEND=ext
to force a choice (forcing ext raises if the extension is missing).
"""

import os

from . import _kernels_py

_choice = os.environ.get("GACQD_BACKEND", "").strip().lower()
if _choice not in ("", "ext", "python"):
    raise ImportError(f"GACQD_BACKEND must be 'ext' or 'python', got {_choice!r}")

kernels = None
name = "python"
if _choice != "python":
    try:
        from . import _kernels as _ext_kernels

        kernels = _ext_kernels
        name = "ext"
    except ImportError:
        if _choice == "ext":
            raise
if kernels is None:
    kernels = _kernels_py
