"""Select the compiled activation kernels when available, NumPy otherwise.

``LPBF_TWIN_PURE_PYTHON=1`` forces the NumPy path, as for the solver stencil.
"""
import os

from . import _act_py

if os.environ.get("LPBF_TWIN_PURE_PYTHON", "") not in ("", "0"):
    gelu_forward, gelu_backward = _act_py.gelu_forward, _act_py.gelu_backward
    BACKEND = "python"
else:
    try:
        from ._act import gelu_backward, gelu_forward
        BACKEND = "cython"
    except ImportError:  # extension not built
        gelu_forward, gelu_backward = _act_py.gelu_forward, _act_py.gelu_backward
        BACKEND = "python"

__all__ = ["gelu_forward", "gelu_backward", "BACKEND"]
