"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when the
environment variable ``SKETCHPRECOND_PURE`` is set to a non-empty value other
than ``0``) the numpy implementations are used.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SKETCHPRECOND_PURE", "") in ("", "0"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

csc_dense_accumulate = _impl.csc_dense_accumulate
csc_csr_accumulate = _impl.csc_csr_accumulate
sort_rows_find_duplicates = _impl.sort_rows_find_duplicates
fwht_columns = _impl.fwht_columns
jacobi_eigenvalues = _impl.jacobi_eigenvalues


def get_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
