"""Hot frame kernels with backend selection at import time.

The compiled Cython module is preferred when present. Set
``CAVFORGE_KERNELS=python`` to force the NumPy fallback (used by the
benchmark and the backend-equivalence tests).
"""

import os

from . import _pyfallback

BACKEND = "python"
_impl = _pyfallback

if os.environ.get("CAVFORGE_KERNELS", "").lower() != "python":
    try:
        from . import _native as _impl_native

        _impl = _impl_native
        BACKEND = "native"
    except ImportError:
        pass

hg_profile = _impl.hg_profile
render_spot = _impl.render_spot
frame_moments = _impl.frame_moments

__all__ = ["BACKEND", "hg_profile", "render_spot", "frame_moments"]
