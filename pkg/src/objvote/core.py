"""Numeric primitives shared by every rule: Gaussian helpers, seeded streams, argmax."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class SeededRng:
    """A reproducible random stream identified by ``(seed, stream)``.

    ``sub`` extends the identity with purpose tags so that a single instance
    stream can feed several independent consumers (sampling, count noise,
    tie-breaking) without any of them shifting the others.
    """

    seed: int
    stream: int = 0
    sub: tuple[int, ...] = ()

    def __post_init__(self):
        for v in (self.seed, self.stream, *self.sub):
            if not 0 <= v < 2**64:
                raise ValueError(f"seed components must be unsigned 64-bit, got {v}")

    def child(self, *tags: int) -> SeededRng:
        return SeededRng(self.seed, self.stream, self.sub + tuple(tags))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.sub))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: SeededRng | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected SeededRng or numpy Generator, got {type(rng).__name__}")


def erf(x: float) -> float:
    """Gauss error function (libm, accurate to a few ulps)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"erf requires a finite argument, got {x}")
    return math.erf(x)


def _check_params(p: GaussianParams) -> None:
    if not p.variance > 0:
        raise ValueError(f"variance must be > 0, got {p.variance}")


def gaussian_pdf(x, p: GaussianParams):
    _check_params(p)
    x = np.asarray(x, dtype=float)
    z = (x - p.mean) / math.sqrt(p.variance)
    out = np.exp(-0.5 * z * z - LOG_SQRT_2PI) / math.sqrt(p.variance)
    return float(out) if out.ndim == 0 else out


def gaussian_cdf(x, p: GaussianParams):
    _check_params(p)
    x = np.asarray(x, dtype=float)
    z = (x - p.mean) / math.sqrt(2.0 * p.variance)
    # erfc keeps full relative precision in the lower tail
    out = 0.5 * special.erfc(-z)
    return float(out) if out.ndim == 0 else out


def std_log_cdf(z):
    """log Phi(z) for the standard normal, accurate in both tails.

    ndtr keeps full relative precision in the lower tail until it underflows
    (z < -37), so the slower log_ndtr is only needed past that point.
    """
    z = np.asarray(z, dtype=float)
    flat = z.reshape(-1)
    with np.errstate(divide="ignore"):
        out = np.log(special.ndtr(flat))
    deep = flat < -30.0
    if np.any(deep):
        out[deep] = special.log_ndtr(flat[deep])
    return out.reshape(z.shape) if z.ndim else float(out[0])


def std_log_pdf(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - LOG_SQRT_2PI


def argmax_random_tiebreak(scores, rng: SeededRng | np.random.Generator) -> int:
    """Index of the maximum score; exact ties are resolved uniformly at random.

    One uniform draw is consumed on every call, tie or not, so the stream
    position after the call does not depend on the scores.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a nonempty vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    u = as_generator(rng).random()
    tied = np.flatnonzero(s == s.max())
    return int(tied[min(int(u * tied.size), tied.size - 1)])
