"""Hot numeric kernels: compiled core with a pure-NumPy fallback.

The compiled extension is preferred when it imported cleanly; set
``LEXALIGN_KERNELS=python`` or ``LEXALIGN_KERNELS=cython`` to force a
backend (the benchmark suite uses this). Both backends implement the
contracts documented in ``_pykernels``.
"""

from __future__ import annotations

import os

from lexalign.kernels import _pykernels

try:
    from lexalign.kernels import _ckernels
except ImportError:  # extension not built; pure fallback keeps the API alive
    _ckernels = None  # type: ignore[assignment]

_requested = os.environ.get("LEXALIGN_KERNELS", "").strip().lower()
if _requested in ("python", "py", "numpy"):
    _impl = _pykernels
elif _requested in ("cython", "c", "compiled"):
    if _ckernels is None:
        raise ImportError(
            "LEXALIGN_KERNELS requested the compiled backend but "
            "lexalign.kernels._ckernels is not built"
        )
    _impl = _ckernels
elif _requested:
    raise ImportError(f"unknown LEXALIGN_KERNELS value: {_requested!r}")
else:
    _impl = _ckernels if _ckernels is not None else _pykernels

BACKEND: str = "cython" if _impl is not _pykernels else "python"

topk_rows = _impl.topk_rows
topk_mean_rows = _impl.topk_mean_rows
posterior_columns = _impl.posterior_columns

__all__ = ["BACKEND", "topk_rows", "topk_mean_rows", "posterior_columns"]
