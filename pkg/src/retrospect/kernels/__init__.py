"""Kernel backend dispatch.

Hot inner loops (activations, distance/loss reductions, optimizer updates)
have two interchangeable implementations: numba @njit kernels and a
pure-numpy fallback. The backend is chosen once at import time from the
``RETROSPECT_KERNELS`` environment variable:

    RETROSPECT_KERNELS=numba   force numba (error if unavailable)
    RETROSPECT_KERNELS=numpy   force the pure-numpy fallback
    unset / auto               numba when importable, else numpy

Matrix products are not routed through here: both backends use numpy's
BLAS-backed ``@``, which a serial njit loop cannot beat. Within one
backend every kernel is deterministic; across backends reduction order
differs, so sums may disagree in the last ulp.

``benchmarks/bench_kernels.py`` times the two backends side by side.
"""

import os

_KERNEL_NAMES = [
    "relu_fwd",
    "relu_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "l1_total_fwd",
    "l1_total_bwd",
    "l1_rows_fwd",
    "l1_rows_bwd",
    "l2_total_fwd",
    "l2_total_bwd",
    "l2_rows_fwd",
    "l2_rows_bwd",
    "xent_fwd",
    "xent_bwd",
    "sgd_step",
    "momentum_step",
    "adam_step",
]

PROB_FLOOR = 1e-12


def _load(requested: str):
    if requested == "numpy":
        from . import _numpy as impl

        return impl, "numpy"
    try:
        from . import _numba as impl

        return impl, "numba"
    except ImportError:
        if requested == "numba":
            raise RuntimeError(
                "RETROSPECT_KERNELS=numba requested but numba is not importable"
            ) from None
        from . import _numpy as impl

        return impl, "numpy"


_requested = os.environ.get("RETROSPECT_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "numpy", "numba"):
    raise RuntimeError(
        f"RETROSPECT_KERNELS must be 'numpy', 'numba' or 'auto', got {_requested!r}"
    )

_impl, BACKEND = _load(_requested)

for _name in _KERNEL_NAMES:
    globals()[_name] = getattr(_impl, _name)

__all__ = _KERNEL_NAMES + ["BACKEND", "PROB_FLOOR"]
