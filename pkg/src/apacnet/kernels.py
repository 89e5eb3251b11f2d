"""Kernel backend selection.

The fused activation kernels of the augmented pass exist twice: a Cython
extension (``apacnet._kernels``) and a numpy fallback
(``apacnet._kernels_np``) with identical signatures and float64 arithmetic.
The compiled backend is used when importable; set ``APACNET_PURE_PYTHON=1``
to force the fallback.  Affine pushforwards are matmul-shaped and go through
BLAS either way (see :mod:`apacnet.augmented`).
"""

import os

from apacnet import _kernels_np

TANH = _kernels_np.TANH
RELU = _kernels_np.RELU

if os.environ.get("APACNET_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from apacnet import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "numpy"

act_aug_fwd = _impl.act_aug_fwd
act_bwd_val = _impl.act_bwd_val
act_bwd_jac = _impl.act_bwd_jac
act_bwd_lap = _impl.act_bwd_lap
