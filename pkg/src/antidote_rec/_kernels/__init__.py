"""Kernel backend selection.

The compiled Cython core is used when the extension was built; otherwise the
pure-numpy fallback takes over. ``ANTIDOTE_REC_BACKEND=python|compiled`` forces
a choice (``compiled`` raises if the extension is unavailable).
"""

from __future__ import annotations

import os

from . import _numpy

_FORCED = os.environ.get("ANTIDOTE_REC_BACKEND", "").strip().lower()

if _FORCED == "python":
    _active = _numpy
else:
    try:
        from . import _core
        _active = _core
    except ImportError:
        if _FORCED == "compiled":
            raise ImportError(
                "ANTIDOTE_REC_BACKEND=compiled but the compiled kernels are not "
                "built; install the package with its extension or unset the variable"
            ) from None
        _active = _numpy

BACKEND = _active.BACKEND_NAME
solve_normal_equations = _active.solve_normal_equations


def available_backends() -> dict[str, object]:
    """Name -> module for every importable backend (used by the benchmark)."""
    found = {_numpy.BACKEND_NAME: _numpy}
    try:
        from . import _core

        found[_core.BACKEND_NAME] = _core
    except ImportError:
        pass
    return found
