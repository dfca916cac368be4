"""Grid-step kernels with a compiled core and a numpy fallback.

The compiled extension (kernels._core, Cython) is preferred when present;
otherwise the numpy implementation is used.  Set RSMFG_FORCE_NUMPY=1 to
force the fallback (the kernel benchmark and parity tests rely on this).
"""

import os

from . import _numpy

if os.environ.get("RSMFG_FORCE_NUMPY"):
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _core
        _impl = _core
        BACKEND = "cython"
    except ImportError:
        _impl = _numpy
        BACKEND = "numpy"

hjb_min_hamiltonian = _impl.hjb_min_hamiltonian
fpk_step = _impl.fpk_step
upwind_gradients = _impl.upwind_gradients

__all__ = ["hjb_min_hamiltonian", "fpk_step", "upwind_gradients", "BACKEND"]
