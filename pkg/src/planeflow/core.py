"""Kernel backend selection.

Imports the compiled extension when available, otherwise falls back to the
pure-Python implementation.  ``PLANEFLOW_BACKEND=python`` forces the fallback
(used by the benchmark and parity tests).
"""

import hashlib
import os

if os.environ.get("PLANEFLOW_BACKEND", "").lower() == "python":
    from . import _core_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "native"
    except ImportError:  # extension not built
        from . import _core_py as _impl

        BACKEND = "python"

nnf_search = _impl.nnf_search
patch_cost_at = _impl.patch_cost_at
knn_geodesic = _impl.knn_geodesic


def derive_seed(*parts):
    """Stable 64-bit seed from a path of components (platform-independent)."""
    key = "/".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
