"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``CDDCLOCK_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
su2_chain = _kernels_py.su2_chain
su2_track_p2 = _kernels_py.su2_track_p2

if not os.environ.get("CDDCLOCK_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "compiled"
        su2_chain = _compiled.su2_chain
        su2_track_p2 = _compiled.su2_track_p2


def backends():
    """Mapping of available backend names to their kernel modules."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["compiled"] = _compiled
    return out
