"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise, or when
``TWOSTAGE_PURE_PYTHON`` is set to a non-empty value, the numpy versions in
``_urn_py`` are used. Both backends return identical results for identical
inputs.
"""
import os

from . import _urn_py

if os.environ.get("TWOSTAGE_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _urn as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _urn_py

urn_null_statistics = _impl.urn_null_statistics
rpw_allocate = _impl.rpw_allocate

__all__ = ["BACKEND", "urn_null_statistics", "rpw_allocate"]
