"""Kernel backend selection.

The compiled extension is used when it imports; set ``BENEFITMARK_PURE=1``
to force the NumPy fallback.
"""
import os

BENEFIT_DIRECT, BENEFIT_LEQ, BENEFIT_LT, BENEFIT_GAP = 0, 1, 2, 3
LINK_CODES = {"logit": 0, "probit": 1, "identity": 2}

from . import _kernels_py as python_backend  # noqa: E402

try:
    if os.environ.get("BENEFITMARK_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as compiled_backend
except ImportError:
    compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

nw_benefit = _active.nw_benefit
nw_matrix = _active.nw_matrix
pair_sq_distances = _active.pair_sq_distances
