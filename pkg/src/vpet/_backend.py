"""Training-kernel backend selection.

The compiled extension (``vpet._kernels``, Cython) is preferred when it
imported cleanly; otherwise the pure-numpy kernels are used. Set
``VPET_BACKEND=python`` or ``VPET_BACKEND=compiled`` to force one.
"""

from __future__ import annotations

import os

from . import _train_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_forced = os.environ.get("VPET_BACKEND", "").strip().lower()
if _forced in ("python", "py", "numpy"):
    _impl = _train_py
elif _forced in ("compiled", "c", "cython"):
    if _compiled is None:
        raise ImportError(
            "VPET_BACKEND=compiled but vpet._kernels is not built"
        )
    _impl = _compiled
elif _forced:
    raise ValueError(f"unknown VPET_BACKEND value {_forced!r}")
else:
    _impl = _compiled if _compiled is not None else _train_py


def backend_name() -> str:
    return "compiled" if _impl is _compiled else "python"


def get_backend(name: str | None = None):
    """Kernel module by name; default is the import-time selection."""
    if name is None:
        return _impl
    if name in ("python", "py", "numpy"):
        return _train_py
    if name in ("compiled", "c", "cython"):
        if _compiled is None:
            raise ImportError("compiled backend not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


train_linear = _impl.train_linear
train_mlp = _impl.train_mlp
