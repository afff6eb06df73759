"""Routing kernels, compiled when available.

``BACKEND`` is ``"cython"`` when the extension imported and ``"numpy"``
otherwise.  Setting ``MESHROUTE_PURE=1`` forces the numpy versions.
"""

import os

from . import _kernels_py

if os.environ.get("MESHROUTE_PURE"):
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

dv_next_hops = _impl.dv_next_hops
drain_time = _impl.drain_time
backpressure_hop = _impl.backpressure_hop
backpressure_select = _impl.backpressure_select
dv_round = _impl.dv_round

__all__ = [
    "BACKEND",
    "dv_next_hops",
    "drain_time",
    "backpressure_hop",
    "backpressure_select",
    "dv_round",
]
