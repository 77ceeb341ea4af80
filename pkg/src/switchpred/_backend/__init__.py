"""Backend selection for the hot simulation kernel.

The environment variable ``SWITCHPRED_BACKEND`` picks the implementation:

* ``auto`` (default) - numba if importable, else the numpy fallback,
* ``numba``          - require the jitted kernel,
* ``numpy``          - force the pure-numpy fallback.

Both backends implement the identical ``simulate_loop`` contract; they
agree to floating-point roundoff (the numpy path groups operations
differently), which `benchmarks/bench_backends.py` measures.
"""

from __future__ import annotations

import os

_CHOICE = os.environ.get("SWITCHPRED_BACKEND", "auto").strip().lower() or "auto"
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"SWITCHPRED_BACKEND must be auto, numba or numpy, got {_CHOICE!r}")

if _CHOICE in ("auto", "numba"):
    try:
        from . import kernels_numba as _impl
    except ImportError:
        if _CHOICE == "numba":
            raise
        from . import kernels_numpy as _impl
else:
    from . import kernels_numpy as _impl

BACKEND = _impl.NAME
simulate_loop = _impl.simulate_loop


def get_kernels(name: str):
    """Explicit access to one backend (used by the benchmark and tests)."""
    name = name.strip().lower()
    if name == "numba":
        from . import kernels_numba
        return kernels_numba
    if name == "numpy":
        from . import kernels_numpy
        return kernels_numpy
    raise ValueError(f"unknown backend {name!r}")
