"""Kernel backend selection.

The compiled kernel is used when it imports; setting the environment variable
``BASKET_WING_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import contextlib
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py.nnqp}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.nnqp

if os.environ.get("BASKET_WING_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

nnqp = BACKENDS[BACKEND]


def use(name: str):
    """Switch the active kernel for the rest of the process."""
    global nnqp, BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    BACKEND = name
    nnqp = BACKENDS[name]


@contextlib.contextmanager
def using(name: str):
    previous = BACKEND
    use(name)
    try:
        yield
    finally:
        use(previous)
