"""Interval estimates shared by the protocol layer and the harness."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

CONFIDENCE = 0.999


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def mean_interval(samples, confidence: float = CONFIDENCE) -> tuple[float, float, float]:
    """Normal-approximation interval for a sample mean: ``(mean, low, high)``."""
    arr = np.asarray(samples, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, mean, mean
    half = stats.norm.ppf(0.5 + confidence / 2) * arr.std(ddof=1) / math.sqrt(arr.size)
    return mean, mean - half, mean + half


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(p * (1 - p) / trials)


def within_sigmas(observed: float, expected: float, trials: int, k: float = 3.0) -> bool:
    """``|observed - expected| <= k * sqrt(p(1-p)/trials)`` for a Bernoulli frequency."""
    return abs(observed - expected) <= k * binomial_sigma(expected, trials) + 1e-12


def chi2_uniform_pvalue(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(stats.chisquare(counts).pvalue)
