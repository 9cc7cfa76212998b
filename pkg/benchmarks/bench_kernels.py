"""Compare the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Kernel timings call both implementations directly; the end-to-end row
runs a voting round in a subprocess per backend (``QVOTE_PURE=1`` selects
the fallback).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from qvote import _kernels_py

try:
    from qvote import _kernels
except ImportError:
    _kernels = None

ROUND_SNIPPET = """
import timeit, numpy as np
from qvote import election
cfg = election.ElectionConfig(8, 1024, trusted_tallyman=True)
rng = np.random.default_rng(0)
print(min(timeit.repeat(lambda: election.run_voting_round(cfg, (0, 1) * 4, rng), number=20, repeat={repeat})) / 20)
"""


def kernel_cases(rng):
    n = 1024
    amps = rng.normal(size=n) + 1j * rng.normal(size=n)
    amps /= np.linalg.norm(amps)
    perm = rng.permutation(1000)
    first, second = np.sort(perm.reshape(-1, 2), axis=1).T.astype(np.int64)
    tags = rng.integers(0, 4096, size=(300, 2)).astype(np.int64)
    left = rng.integers(0, 16, size=(64, 16)).astype(np.int64)
    right = rng.integers(0, 16, size=(64, 16)).astype(np.int64)
    return {
        "matching_outcome_probs (n=1000)": ("matching_outcome_probs", (amps, first.copy(), second.copy(), 1000)),
        "counted_mask (300 tags)": ("counted_mask", (tags[:, 0].copy(), tags[:, 1].copy(), 4096)),
        "ring_key_shares (64 rings x 16)": ("ring_key_shares", (left, right, 16)),
    }


def time_call(fn, args, repeat):
    number = 200
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def round_time(pure: bool, repeat: int) -> float:
    env = dict(os.environ)
    if pure:
        env["QVOTE_PURE"] = "1"
    else:
        env.pop("QVOTE_PURE", None)
    out = subprocess.run([sys.executable, "-c", ROUND_SNIPPET.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="emit machine-readable results")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    rows = []
    for label, (name, call_args) in kernel_cases(np.random.default_rng(1)).items():
        py = time_call(getattr(_kernels_py, name), call_args, args.repeat)
        cy = time_call(getattr(_kernels, name), call_args, args.repeat)
        rows.append({"case": label, "python_us": py * 1e6, "cython_us": cy * 1e6, "speedup": py / cy})
    py, cy = round_time(True, args.repeat), round_time(False, args.repeat)
    rows.append({"case": "voting round (N=8, n=1024)", "python_us": py * 1e6, "cython_us": cy * 1e6,
                 "speedup": py / cy})
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'case':<34}{'python us':>12}{'cython us':>12}{'speedup':>9}")
        for r in rows:
            print(f"{r['case']:<34}{r['python_us']:>12.1f}{r['cython_us']:>12.1f}{r['speedup']:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
