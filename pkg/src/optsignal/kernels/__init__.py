"""Rolling-window kernels.

The compiled extension is used when it was built; otherwise (or when
``OPTSIGNAL_PURE_PYTHON=1``) the numpy fallback is used.  ``BACKEND`` names
the active implementation.
"""

import os

from . import _fallback

_compiled = None
if os.environ.get("OPTSIGNAL_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "python"

window_moments = _impl.window_moments
trailing_zscores = _impl.trailing_zscores


def backend(name):
    """Return the kernel module named ``"cython"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core as core  # raises ImportError when not built

        return core
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    try:
        backend("cython")
    except ImportError:
        return False
    return True
