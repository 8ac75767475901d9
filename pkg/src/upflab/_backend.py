"""Kernel backend selection.

Hot numeric kernels ship in two equivalent implementations: numba
``@njit`` loops and plain numpy. The active one is picked once at import
time from the ``UPFLAB_BACKEND`` environment variable:

  * ``auto``  (default) -- numba when importable, numpy otherwise
  * ``numba`` -- require numba, fail loudly if missing
  * ``numpy`` -- force the pure-numpy path

Both paths consume identical pre-drawn random inputs and use the same
arithmetic, so results are reproducible across backends (bit-exact for
the integer queue kernels and the resampling counts).
"""

import os

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_VALID = ("auto", "numba", "numpy")


def _resolve(name: str) -> str:
    if name not in _VALID:
        raise ValueError(
            f"UPFLAB_BACKEND={name!r} not recognized; expected one of {_VALID}"
        )
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("UPFLAB_BACKEND=numba but numba is not importable")
    if name == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return name


BACKEND = _resolve(os.environ.get("UPFLAB_BACKEND", "auto"))


def using_numba() -> bool:
    return BACKEND == "numba"
