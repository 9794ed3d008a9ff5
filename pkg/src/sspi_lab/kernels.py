"""Kernel selection: the compiled module when it imports, numpy otherwise.

Set ``SSPI_LAB_PURE=1`` to force the numpy versions.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SSPI_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

pref_choice = _impl.pref_choice
pref_totals = _impl.pref_totals
budget_collect = _impl.budget_collect
budget_totals = _impl.budget_totals
