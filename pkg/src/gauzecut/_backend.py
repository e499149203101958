"""Select the step kernel: compiled extension when importable, numpy otherwise.

Set ``GAUZECUT_BACKEND=python`` to force the numpy path.
"""
import os
import warnings

from . import _pykernels

BACKEND = "python"
step_into = _pykernels.step_into

if os.environ.get("GAUZECUT_BACKEND", "").lower() not in ("python", "numpy"):
    try:
        from . import _ckernels
    except ImportError:
        warnings.warn(
            "gauzecut compiled kernel unavailable; using the numpy fallback "
            "(build it with `pip install -e . --no-build-isolation`)",
            ImportWarning,
        )
    else:
        step_into = _ckernels.step_into
        BACKEND = "cython"

KERNELS = {"python": _pykernels.step_into}
try:
    from . import _ckernels as _ck

    KERNELS["cython"] = _ck.step_into
except ImportError:
    pass
