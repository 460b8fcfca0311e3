"""Hot numerical kernels with a compiled backend and a numpy fallback.

The backend is chosen once at import: the compiled module is used when it
was built and ``PDDSSCA_PURE_PYTHON`` is unset or ``0``.
"""
import os

from . import _reference

BACKEND = "python"
_impl = _reference

if os.environ.get("PDDSSCA_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

wmmse_sweep = _impl.wmmse_sweep
cmac_power = _impl.cmac_power

__all__ = ["BACKEND", "wmmse_sweep", "cmac_power"]
