"""Optional numba acceleration.

Hot loops are written twice: a compiled loop kernel and a vectorised numpy
version.  ``KGSCATTER_DISABLE_JIT=1`` (or a missing numba) selects numpy.
"""
import os

try:
    import numba as nb

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("KGSCATTER_DISABLE_JIT", "0").strip().lower() in ("1", "true", "yes", "on")


JIT_DISABLED = (not _HAVE_NUMBA) or _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def backend():
    """Name of the backend the dispatching wrappers use right now."""
    return "numpy" if (not _HAVE_NUMBA or _env_disabled()) else "numba"
