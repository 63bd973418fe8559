"""Select the compiled enthalpy step when available, NumPy otherwise.

Set ``LPBF_TWIN_PURE_PYTHON=1`` to force the NumPy path.
"""
import os

from . import _stencil_py

if os.environ.get("LPBF_TWIN_PURE_PYTHON", "") not in ("", "0"):
    enthalpy_step = _stencil_py.enthalpy_step
    BACKEND = "python"
else:
    try:
        from ._stencil import enthalpy_step
        BACKEND = "cython"
    except ImportError:  # extension not built
        enthalpy_step = _stencil_py.enthalpy_step
        BACKEND = "python"

__all__ = ["enthalpy_step", "BACKEND"]
