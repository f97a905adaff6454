"""Hot numeric kernels with switchable backends.

Two interchangeable implementations exist: numba-compiled loops
(`numba_impl`) and pure numpy (`numpy_impl`). The active backend is chosen
at import from the ``MIXTEACHER_BACKEND`` environment variable
(``auto`` | ``numba`` | ``numpy``, default ``auto`` = numba when it
imports cleanly), and can be switched at runtime with `use_backend`, which
`benchmarks/bench_kernels.py` uses to time one against the other.
"""

import os

from . import numpy_impl

_KERNEL_NAMES = (
    "im2col",
    "col2im",
    "bilinear_resize",
    "roi_align",
    "roi_align_grad",
    "pairwise_iou",
    "nms_keep",
)

_numba_impl = None
_backend_name = "numpy"


def _load_numba():
    global _numba_impl
    if _numba_impl is None:
        from . import numba_impl
        _numba_impl = numba_impl
    return _numba_impl


def use_backend(name: str) -> str:
    """Select the kernel backend; returns the name actually activated."""
    global _backend_name
    if name == "auto":
        try:
            _load_numba()
            name = "numba"
        except ImportError:
            name = "numpy"
    if name == "numba":
        impl = _load_numba()
    elif name == "numpy":
        impl = numpy_impl
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(impl, fn)
    _backend_name = name
    return name


def active_backend() -> str:
    return _backend_name


use_backend(os.environ.get("MIXTEACHER_BACKEND", "auto"))
