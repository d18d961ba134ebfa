"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
implementation takes over. Set ``CONDWCO_PURE=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("CONDWCO_PURE", "") not in ("", "0"):
    backend = _kernels_py
else:
    try:
        from . import _kernels as backend
    except ImportError:  # extension not built
        backend = _kernels_py

BACKENDS = {"numpy": _kernels_py}
if backend is not _kernels_py:
    BACKENDS["cython"] = backend

NAME = backend.NAME
block_average = backend.block_average
apply_T = backend.apply_T
iterate_T = backend.iterate_T
orbit_norms = backend.orbit_norms
cocycle = backend.cocycle
preimage_mass = backend.preimage_mass
