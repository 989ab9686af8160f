"""Kernel backend selection.

The sequential renormalized matrix chain is the hot loop of every orbit
computation, so it lives in a small compiled extension when available.
Setting ``COCYCLEKIT_PURE=1`` forces the numpy fallback (used by the
benchmark and by the backend-parity tests).
"""

import os

import numpy as np

from . import _pure

if os.environ.get("COCYCLEKIT_PURE", "0") not in ("", "0"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"


def chain_scaled_partials(mats, want=None, init=None, init_log=0.0, backend=None):
    """Scaled partial products of a matrix chain; see ``_pure`` for semantics.

    ``want`` defaults to ``[n]`` (final product only).  ``backend`` overrides
    the import-time selection ("pure" or "compiled").
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError("mats must have shape (n, d, d)")
    n, d = mats.shape[0], mats.shape[1]
    if want is None:
        want = np.array([n], dtype=np.int64)
    else:
        want = np.ascontiguousarray(want, dtype=np.int64)
        if want.size and (want[0] < 1 or want[-1] > n or np.any(np.diff(want) <= 0)):
            raise ValueError("want must be strictly increasing within [1, n]")
    if init is None:
        init = np.eye(d)
    init = np.ascontiguousarray(init, dtype=np.float64)
    impl = _impl if backend is None else {"pure": _pure, "compiled": _impl}[backend]
    if backend == "compiled" and BACKEND != "compiled":
        raise RuntimeError("compiled kernel requested but not built")
    return impl.chain_scaled_partials(mats, want, init, float(init_log))
