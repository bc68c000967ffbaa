"""Kernel backend selection.

The compiled Cython core is used when available; the pure-numpy
fallback is semantically equivalent and selected automatically when the
extension is missing, or explicitly via ``DUOVC_BACKEND=python``.
``use()`` swaps backends at runtime (single-threaded; meant for the
backend comparison benchmark and tests).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import pykernels

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None

_FORCED = os.environ.get("DUOVC_BACKEND", "").strip().lower()
if _FORCED and _FORCED not in ("compiled", "python"):
    raise ValueError(f"DUOVC_BACKEND must be 'compiled' or 'python', got {_FORCED!r}")
if _FORCED == "compiled" and _core is None:
    raise ImportError("DUOVC_BACKEND=compiled but the duovc.backend._core extension is not built")

_active = pykernels if (_FORCED == "python" or _core is None) else _core


def available() -> list[str]:
    names = ["python"]
    if _core is not None:
        names.insert(0, "compiled")
    return names


def name() -> str:
    return "compiled" if _active is _core else "python"


def kernels():
    return _active


@contextmanager
def use(backend_name: str):
    """Temporarily select a backend by name."""
    global _active
    table = {"python": pykernels, "compiled": _core}
    if backend_name not in table:
        raise ValueError(f"unknown backend {backend_name!r}")
    if table[backend_name] is None:
        raise ValueError("compiled backend is not built")
    prev = _active
    _active = table[backend_name]
    try:
        yield
    finally:
        _active = prev
