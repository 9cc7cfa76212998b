"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``QVOTE_PURE=1`` to force the fallback (used by the equivalence tests
and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from qvote import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("QVOTE_PURE", "") not in ("1", "true", "yes"):
    try:
        from qvote import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def matching_outcome_probs(amps, first, second, n_valid):
    return _impl.matching_outcome_probs(
        np.ascontiguousarray(amps, dtype=complex),
        np.ascontiguousarray(first, dtype=np.int64),
        np.ascontiguousarray(second, dtype=np.int64),
        int(n_valid),
    )


def counted_mask(i, j, n):
    mask = _impl.counted_mask(
        np.ascontiguousarray(i, dtype=np.int64), np.ascontiguousarray(j, dtype=np.int64), int(n)
    )
    return np.asarray(mask, dtype=bool)


def ring_key_shares(left, right, M):
    return _impl.ring_key_shares(left, right, int(M))
