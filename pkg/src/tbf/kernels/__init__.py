"""Kernel backend selection.

Two interchangeable backends implement the hot filtering loops: a compiled
Cython extension (``_bilateral_cy``) and a pure-numpy fallback
(``_bilateral_py``).  The compiled one is preferred when importable; set
``TBF_BACKEND=python`` or ``TBF_BACKEND=cython`` to force a choice (forcing
``cython`` raises if the extension is missing).

Both expose ``forward`` and ``backward`` with identical signatures and agree
numerically to floating-point rounding; see ``tbf.bench`` for a speed
comparison.
"""

import os

from . import _bilateral_py

_requested = os.environ.get("TBF_BACKEND")
if _requested not in (None, "", "cython", "python"):
    raise ImportError(
        f"TBF_BACKEND={_requested!r} not recognized (use 'cython' or 'python')"
    )

if _requested == "python":
    _impl = _bilateral_py
else:
    try:
        from . import _bilateral_cy as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _bilateral_py

#: Name of the backend selected at import: "cython" or "python".
ACTIVE_BACKEND = _impl.NAME

forward = _impl.forward
backward = _impl.backward


def available_backends():
    """Importable backend modules keyed by name."""
    found = {"python": _bilateral_py}
    try:
        from . import _bilateral_cy

        found["cython"] = _bilateral_cy
    except ImportError:
        pass
    return found
