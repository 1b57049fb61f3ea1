"""Backend selection for the hot loops.

The compiled core is used when it imports; ``INFA_BACKEND=pure`` forces the
NumPy fallback and ``INFA_BACKEND=compiled`` makes a missing core an error.
"""
from __future__ import annotations

import os

from . import _pure

try:
    from . import _core
except ImportError:  # not built
    _core = None

BACKENDS = {"pure": _pure}
if _core is not None:
    BACKENDS["compiled"] = _core


def get_backend(name: str | None = None):
    if name is None or name == "auto":
        name = os.environ.get("INFA_BACKEND", "auto")
    if name == "auto":
        return _core if _core is not None else _pure
    try:
        return BACKENDS[name]
    except KeyError:
        raise ImportError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def backend_name(module) -> str:
    return "compiled" if module is _core and _core is not None else "pure"
