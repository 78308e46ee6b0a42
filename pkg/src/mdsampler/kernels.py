"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_pycore`` twin.  Set ``MDSAMPLER_BACKEND=python`` to force the
fallback.  ``get_backend(name)`` returns a specific backend module.
"""

import os

from . import _pycore

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

MAX_COMPILED_NODES = 16


def get_backend(name=None):
    if name is None:
        name = os.environ.get("MDSAMPLER_BACKEND", "auto")
    if name == "python":
        return _pycore
    if name in ("cython", "compiled"):
        if _core is None:
            raise ImportError("compiled kernels are not built")
        return _core
    if name == "auto":
        return _core if _core is not None else _pycore
    raise ValueError(f"unknown backend {name!r}")


backend = get_backend()
BACKEND = backend.BACKEND
python_backend = _pycore
