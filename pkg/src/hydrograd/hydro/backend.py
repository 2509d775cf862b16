"""Kernel backend selection.

The compiled extension is used when importable; HYDROGRAD_BACKEND=python or
=cython forces a choice.  Both backends implement the same forward/adjoint
signatures and the same discrete scheme; trajectories agree to rounding.
"""

import os

from . import _kernels as _python_kernels

try:
    from . import _kernels_cy as _cython_kernels
except ImportError:
    _cython_kernels = None

_BY_NAME = {"python": _python_kernels}
if _cython_kernels is not None:
    _BY_NAME["cython"] = _cython_kernels


def available_backends():
    return tuple(sorted(_BY_NAME))


def default_backend_name() -> str:
    forced = os.environ.get("HYDROGRAD_BACKEND")
    if forced:
        if forced not in _BY_NAME:
            raise ImportError(
                f"HYDROGRAD_BACKEND={forced!r} but available backends are "
                f"{available_backends()}"
            )
        return forced
    return "cython" if "cython" in _BY_NAME else "python"


def get_backend(name=None):
    if name is None:
        name = default_backend_name()
    if name not in _BY_NAME:
        raise ImportError(
            f"backend {name!r} not available; have {available_backends()}"
        )
    return _BY_NAME[name]
