"""Pure-Python reference implementations of the hot kernels.

These mirror ``_kernels.pyx`` exactly and are selected automatically when
the compiled extension is unavailable (or ``QVOTE_PURE=1`` is set).
"""

from __future__ import annotations

import numpy as np


def matching_outcome_probs(amps, first, second, n_valid):
    """Born probabilities of every outcome of a matching measurement.

    Slot ``2k`` is the ``(|i>+|j>)/sqrt2`` outcome of pair ``k``, slot
    ``2k+1`` the ``-`` outcome; labels ``>= n_valid`` follow as singleton
    computational outcomes.
    """
    amps = np.asarray(amps, dtype=complex)
    a = amps[first]
    b = amps[second]
    npairs = len(first)
    out = np.empty(2 * npairs + (amps.size - n_valid))
    out[0 : 2 * npairs : 2] = np.abs(a + b) ** 2 / 2
    out[1 : 2 * npairs : 2] = np.abs(a - b) ** 2 / 2
    out[2 * npairs :] = np.abs(amps[n_valid:]) ** 2
    return out


def counted_mask(i, j, n):
    """First-wins vertex filter: tag ``l`` counts iff disjoint from all earlier counted tags."""
    used = bytearray(n)
    out = np.zeros(len(i), dtype=np.uint8)
    for l in range(len(i)):
        a, b = int(i[l]), int(j[l])
        if not used[a] and not used[b]:
            used[a] = used[b] = 1
            out[l] = 1
    return out


def ring_key_shares(left, right, M):
    """Key values after the generalized CNOT for a batch of rings.

    ``left[t, k]`` is party ``k``'s value on ring link ``k`` and
    ``right[t, k]`` party ``k+1``'s value on the same link.  Party ``k``
    holds ``i_k = right[t, k-1]`` and ``j_k = left[t, k]``.
    """
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    return (left + (M - 1) * np.roll(right, 1, axis=-1)) % M
