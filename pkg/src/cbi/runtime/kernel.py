"""Kernel selection: compiled extension when available, pure Python otherwise.

Set CBI_PURE=1 to force the pure-Python kernel (used by the benchmark and
the parity tests).
"""

from __future__ import annotations

import os

if os.environ.get("CBI_PURE") == "1":
    from ._kernel_py import KERNEL_NAME, run_kernel
else:
    try:
        from ._kernel import KERNEL_NAME, run_kernel  # type: ignore[attr-defined]
    except ImportError:
        from ._kernel_py import KERNEL_NAME, run_kernel

__all__ = ["run_kernel", "KERNEL_NAME"]
