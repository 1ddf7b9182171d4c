"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the numpy
fallback is used.  ``D2L_KERNELS=python`` forces the fallback (useful for
benchmarking and for testing backend equivalence), ``D2L_KERNELS=compiled``
makes a missing extension a hard error.
"""

import os

_forced = os.environ.get("D2L_KERNELS", "").strip().lower()

if _forced in ("py", "python", "fallback"):
    from . import _kernels_py as _impl

    COMPILED = False
elif _forced in ("c", "compiled", "cython"):
    from . import _kernels as _impl  # type: ignore[no-redef]

    COMPILED = True
elif _forced:
    raise ValueError(f"unknown D2L_KERNELS value: {_forced!r}")
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        from . import _kernels_py as _impl

        COMPILED = False

BACKEND_NAME = "compiled" if COMPILED else "python"

query_dists = _impl.query_dists
batch_knn = _impl.batch_knn
