"""Anonymous scoring rules and their naive experience-weighted variants."""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..simulation import VoteSet


class CountModification(str, Enum):
    ARITHMETIC = "arithmetic-mean"
    HARMONIC = "harmonic-mean"
    SQRT_ARITHMETIC = "sqrt-arithmetic"
    SQRT_HARMONIC = "sqrt-harmonic"
    LOG_ARITHMETIC = "log-arithmetic"
    LOG_HARMONIC = "log-harmonic"


def plurality(top_choices, n: int) -> np.ndarray:
    tops = np.asarray(top_choices, dtype=np.int64).reshape(-1)
    if tops.size and (tops.min() < 0 or tops.max() >= n):
        raise ValueError(f"top choice out of range for {n} alternatives")
    return np.bincount(tops, minlength=n).astype(float)


def _check_rankings(rankings) -> np.ndarray:
    r = np.asarray(rankings, dtype=np.int64)
    if r.ndim != 2:
        raise ValueError("rankings must be an (m, n) array")
    if not np.all(np.sort(r, axis=1) == np.arange(r.shape[1])):
        raise ValueError("every ranking must be a permutation of 0..n-1")
    return r


def borda_points(rankings) -> np.ndarray:
    """Per-voter Borda points, shape (m, n): rank position r earns n - 1 - r."""
    r = _check_rankings(rankings)
    m, n = r.shape
    pts = np.empty((m, n))
    pts[np.arange(m)[:, None], r] = np.arange(n - 1, -1, -1, dtype=float)
    return pts


def borda(rankings) -> np.ndarray:
    return borda_points(rankings).sum(axis=0)


def _voter_weights(counts, mod: CountModification) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if np.any(c < 1):
        raise ValueError("counts must be >= 1")
    mod = CountModification(mod)
    if mod in (CountModification.ARITHMETIC, CountModification.SQRT_ARITHMETIC,
               CountModification.LOG_ARITHMETIC):
        base = c.mean(axis=-1)
    else:
        base = c.shape[-1] / (1.0 / c).sum(axis=-1)
    if mod in (CountModification.SQRT_ARITHMETIC, CountModification.SQRT_HARMONIC):
        return np.sqrt(base)
    if mod in (CountModification.LOG_ARITHMETIC, CountModification.LOG_HARMONIC):
        # log1p keeps the weight positive for small means
        return np.log1p(base)
    return base


def voter_weight(counts_row, mod: CountModification) -> float:
    return float(_voter_weights(np.asarray(counts_row).reshape(-1), mod))


def experience_weighted(base: str, votes: VoteSet, counts, mod: CountModification) -> np.ndarray:
    """Plurality or Borda with each voter's points scaled by a count-derived weight."""
    counts = np.asarray(counts)
    if counts.shape != votes.rankings.shape:
        raise ValueError(f"counts shape {counts.shape} != votes shape {votes.rankings.shape}")
    w = _voter_weights(counts, mod)
    if base == "plurality":
        pts = np.zeros(counts.shape)
        pts[np.arange(votes.m), votes.top_choices] = 1.0
    elif base == "borda":
        pts = borda_points(votes.rankings)
    else:
        raise ValueError(f"unknown base rule {base!r}")
    if w.size == 0:
        return pts.sum(axis=0)
    # equal weights reduce to exact integer sums, so ties survive weighting bit-for-bit
    top = w.max()
    return ((w / top) @ pts) * top
