"""Convolution kernel backend selection.

Two interchangeable implementations exist:

* ``compiled`` -- Cython extension with a fixed sequential reduction order
  (see ``_convcore.pyx``).
* ``numpy``    -- shifted-matmul fallback whose inner products run in BLAS.

``PHASEN_BACKEND`` picks one explicitly (``compiled`` | ``numpy``).  The
default is ``auto``: the compiled core when ``PHASEN_DETERMINISTIC=1`` asks
for a pinned reduction order, the numpy path otherwise (on this package's
typical layer sizes BLAS wins; see benchmarks/bench_kernels.py).
"""

import os

from . import _convpy

try:
    from . import _convcore
except ImportError:  # extension not built
    _convcore = None

_BACKENDS = {}
_BACKENDS["numpy"] = _convpy
if _convcore is not None:
    _BACKENDS["compiled"] = _convcore


def deterministic() -> bool:
    return os.environ.get("PHASEN_DETERMINISTIC", "") == "1"


def _select() -> str:
    choice = os.environ.get("PHASEN_BACKEND", "auto")
    if choice == "auto":
        if deterministic() and "compiled" in _BACKENDS:
            return "compiled"
        return "numpy"
    if choice not in _BACKENDS:
        raise RuntimeError(
            f"PHASEN_BACKEND={choice!r} unavailable; "
            f"built backends: {sorted(_BACKENDS)}"
        )
    return choice


_active = _select()


def active_backend() -> str:
    return _active


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (default: the active one)."""
    return _BACKENDS[name or _active]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    """Override the active backend (used by tests and benchmarks)."""
    global _active
    if name not in _BACKENDS:
        raise RuntimeError(f"backend {name!r} not built; have {sorted(_BACKENDS)}")
    _active = name
