"""Backend selection for the hot kernels.

Kernels in :mod:`synthgauge._kernels` exist twice: an explicit-loop version
compiled with ``numba.njit`` and a vectorised pure-numpy version. The numba
path is used when numba imports and ``SYNTHGAUGE_DISABLE_NUMBA`` is unset
(or ``0``). :func:`set_backend` switches at runtime, mainly for tests and the
benchmark script.
"""
import os
import warnings

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAS_NUMBA = False


def _env_disabled():
    return os.environ.get("SYNTHGAUGE_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


_use_numba = HAS_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    fastmath stays off: several tests compare kernels bit-for-bit against
    brute-force oracles.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def use_numba():
    return _use_numba


def backend():
    return "numba" if _use_numba else "numpy"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``. Returns the previous backend name."""
    global _use_numba
    previous = backend()
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba is not installed")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def set_threads(n):
    """Apply a thread count to numba's pool (0 = leave numba's default).

    The shipped kernels run serially so that results do not depend on the
    thread count; the pool size matters only for user-supplied parallel code.
    """
    if n is not None and int(n) < 0:
        raise ValueError(f"thread count must be >= 0, got {n}")
    if HAS_NUMBA and n:
        with warnings.catch_warnings():
            # numba probes for TBB on first pool use and warns when it is too old
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
