"""Kernel backend selection.

Hot loops exist twice: as numba-compiled per-particle kernels and as a
vectorized numpy path.  ``GSHS_RISK_BACKEND=numpy`` forces the numpy path
and also leaves every scalar helper uncompiled; ``numba`` (the default when
numba imports) selects the compiled kernels.  :func:`set_backend` switches
the hot-loop dispatch at run time.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "GSHS_RISK_BACKEND"
BACKENDS = ("numba", "numpy")


def _from_env() -> str:
    value = os.environ.get(ENV_FLAG, "").strip().lower()
    if value in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if value in ("numpy", "0", "off", "false", "none"):
        return "numpy"
    if value in ("numba", "1", "on", "true", "jit"):
        if not HAVE_NUMBA:
            raise RuntimeError(f"{ENV_FLAG}={value} but numba is not importable")
        return "numba"
    raise RuntimeError(f"unrecognised {ENV_FLAG} value {value!r}")


_active = _from_env()
_COMPILE = _active == "numba"


def compiled() -> bool:
    """Whether :func:`jit` compiles in this process."""
    return _COMPILE


def active() -> str:
    return _active


def use_numba() -> bool:
    return _active == "numba"


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not _COMPILE:
        raise RuntimeError("numba kernels were not compiled in this process "
                           f"(numba missing or {ENV_FLAG}=numpy at import)")
    _active = name


@contextlib.contextmanager
def using(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def jit(fn):
    """Compile ``fn`` in nopython mode unless the numpy backend was requested.

    Compilation is lazy: the first call pays for it (or loads the on-disk
    cache).
    """
    if not _COMPILE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
