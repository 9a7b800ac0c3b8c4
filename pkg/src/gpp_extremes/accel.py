"""Numba acceleration toggle.

Hot loop kernels in :mod:`gpp_extremes.kernels` ship in two variants: a
numba ``@njit`` build of the loop body and a vectorized pure-numpy twin.
The active variant is chosen once, at import time:

* ``GPP_EXTREMES_NUMBA=0`` (or ``false``/``no``/``off``) forces the
  numpy path;
* otherwise numba is used whenever it imports cleanly.

``benchmarks/bench_kernels.py`` times both variants side by side.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False


def numba_requested() -> bool:
    flag = os.environ.get("GPP_EXTREMES_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


NUMBA_ENABLED = HAS_NUMBA and numba_requested()


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    Serial nopython compilation only: parallel reductions would reorder
    float additions and break bytewise run-to-run determinism.
    """
    if NUMBA_ENABLED:
        return numba.njit(func)
    return func
