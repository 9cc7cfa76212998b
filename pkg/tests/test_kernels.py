import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qvote import _kernels_py, kernels

compiled = pytest.importorskip("qvote._kernels", reason="compiled extension not built")


def _counted_oracle(i, j):
    used, out = set(), []
    for a, b in zip(i, j):
        ok = a not in used and b not in used
        if ok:
            used |= {a, b}
        out.append(ok)
    return out


@given(st.integers(0, 2**32), st.integers(1, 6))
def test_matching_probs_equivalent(seed, half):
    g = np.random.default_rng(seed)
    n = 2 * half
    dim = 1 << (n - 1).bit_length()
    amps = g.normal(size=dim) + 1j * g.normal(size=dim)
    amps /= np.linalg.norm(amps)
    perm = g.permutation(n)
    first, second = np.sort(perm.reshape(-1, 2), axis=1).T.copy()
    py = _kernels_py.matching_outcome_probs(amps, first, second, n)
    cy = np.asarray(compiled.matching_outcome_probs(amps, first.astype(np.int64), second.astype(np.int64), n))
    assert np.allclose(py, cy)
    assert np.isclose(py.sum(), 1.0)


@given(st.integers(0, 2**32), st.integers(0, 40))
def test_counted_mask_equivalent(seed, count):
    g = np.random.default_rng(seed)
    n = 16
    pairs = np.array([g.choice(n, 2, replace=False) for _ in range(count)], dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0].copy(), pairs[:, 1].copy()
    py = _kernels_py.counted_mask(i, j, n).astype(bool)
    cy = np.asarray(compiled.counted_mask(i, j, n), dtype=bool)
    assert py.tolist() == cy.tolist() == _counted_oracle(i.tolist(), j.tolist())


@given(st.integers(0, 2**32), st.integers(1, 20), st.sampled_from([2, 4, 8, 16, 32]))
def test_ring_key_shares_equivalent(seed, N, M):
    g = np.random.default_rng(seed)
    left = g.integers(0, M, size=(5, N))
    right = g.integers(0, M, size=(5, N))
    py = _kernels_py.ring_key_shares(left, right, M)
    cy = np.asarray(compiled.ring_key_shares(left, right, M))
    assert np.array_equal(py, cy)
    # with matched link values the shares sum to zero
    assert np.all(np.asarray(_kernels_py.ring_key_shares(left, left, M)).sum(axis=1) % M == 0)


def test_dispatch_uses_compiled():
    assert kernels.BACKEND == "cython"


def test_pure_env_forces_fallback():
    env = dict(os.environ, QVOTE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import qvote; print(qvote.KERNEL_BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
