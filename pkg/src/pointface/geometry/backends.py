"""Kernel backend selection.

The compiled extension is preferred when importable; POINTFACE_BACKEND
(numpy|compiled) forces a choice. Both backends produce identical outputs;
only throughput differs.
"""

from __future__ import annotations

import os

from ..errors import InvalidInput
from . import kernels_numpy

_BACKENDS = {"numpy": kernels_numpy}

try:
    from . import kernels_compiled

    _BACKENDS["compiled"] = kernels_compiled
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def _pick_default() -> str:
    forced = os.environ.get("POINTFACE_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise InvalidInput(
                f"POINTFACE_BACKEND={forced!r} not available; choices: {sorted(_BACKENDS)}"
            )
        return forced
    return "compiled" if HAVE_COMPILED else "numpy"


DEFAULT_BACKEND = _pick_default()


def available_backends() -> tuple:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    if name is None:
        name = DEFAULT_BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise InvalidInput(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}") from None
