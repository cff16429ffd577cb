"""Bandit noise process: ground truths, pull counts, voter estimates and the votes they imply."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Iterator

import numpy as np

from .core import GaussianParams, SeededRng, as_generator

COUNT_MAX = 50


@dataclass(frozen=True)
class GroundTruth:
    mu: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma2 = np.asarray(self.sigma2, dtype=float)
        if mu.ndim != 1 or mu.size < 2:
            raise ValueError("ground truth needs at least two alternatives")
        if sigma2.shape != mu.shape or np.any(sigma2 < 0):
            raise ValueError("sigma2 must be a nonnegative vector matching mu")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def n(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class VoteSet:
    """Strict rankings, one row per voter, best alternative first."""

    rankings: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rankings, dtype=np.int64)
        if r.ndim != 2:
            raise ValueError("rankings must be an (m, n) array")
        n = r.shape[1]
        if r.size and not np.all(np.sort(r, axis=1) == np.arange(n)):
            raise ValueError("every ranking must be a permutation of 0..n-1")
        object.__setattr__(self, "rankings", r)

    @property
    def m(self) -> int:
        return self.rankings.shape[0]

    @property
    def n(self) -> int:
        return self.rankings.shape[1]

    @cached_property
    def top_choices(self) -> np.ndarray:
        return self.rankings[:, 0].copy()

    @cached_property
    def positions(self) -> np.ndarray:
        """positions[i, j] is the rank of alternative j for voter i (0 = top)."""
        pos = np.empty_like(self.rankings)
        rows = np.arange(self.m)[:, None]
        pos[rows, self.rankings] = np.arange(self.n)
        return pos

    @cached_property
    def pairwise(self) -> np.ndarray:
        """pairwise[i, j, k] = 1 if voter i prefers k to j; only j < k is populated."""
        pos = self.positions
        y = (pos[:, :, None] > pos[:, None, :]).astype(np.int8)
        return np.triu(y, k=1)


@dataclass(frozen=True)
class Instance:
    truth: GroundTruth
    counts: np.ndarray
    estimates: np.ndarray
    votes: VoteSet
    optimal: int

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return self.counts.shape[1]

    def to_json(self) -> dict:
        return {
            "mu": self.truth.mu.tolist(),
            "sigma2": self.truth.sigma2.tolist(),
            "counts": self.counts.tolist(),
            "estimates": self.estimates.tolist(),
            "rankings": self.votes.rankings.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> Instance:
        truth = GroundTruth(np.asarray(obj["mu"]), np.asarray(obj["sigma2"]))
        counts = np.asarray(obj["counts"], dtype=np.int64)
        estimates = np.asarray(obj["estimates"], dtype=float)
        if counts.shape != estimates.shape or counts.shape[1] != truth.n:
            raise ValueError("counts/estimates shape does not match ground truth")
        votes = VoteSet(np.asarray(obj["rankings"], dtype=np.int64))
        if votes.rankings.shape != counts.shape:
            raise ValueError("rankings shape does not match counts")
        return cls(truth, counts, estimates, votes, int(np.argmax(truth.mu)))


@dataclass(frozen=True)
class SimConfig:
    n_alternatives: int = 10
    n_voters: int = 10
    count_min: int = 1
    count_max: int = COUNT_MAX
    obs_variance: float = 1000.0
    mu_prior: GaussianParams = field(default_factory=GaussianParams)

    def __post_init__(self):
        if self.n_alternatives < 2:
            raise ValueError("need at least two alternatives")
        if self.n_voters < 1:
            raise ValueError("need at least one voter")
        if not 1 <= self.count_min <= self.count_max:
            raise ValueError("require 1 <= count_min <= count_max")
        if not self.obs_variance >= 0:
            raise ValueError("obs_variance must be >= 0")


def derive_ranking(xi) -> np.ndarray:
    """Alternatives by descending estimate; exact ties keep ascending index order."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("estimates must be finite")
    return np.argsort(-xi, axis=-1, kind="stable")


def derive_pairwise(xi) -> np.ndarray:
    """y[j, k] = 1 iff x_j <= x_k (k weakly preferred), for j < k; zero elsewhere."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("estimates must be finite")
    y = (xi[..., :, None] <= xi[..., None, :]).astype(np.int8)
    return np.triu(y, k=1)


def sample_arrays(cfg: SimConfig, size: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized draw of ``size`` instances as (mu, counts, estimates) arrays.

    Voter means are drawn directly as N(mu, var / c), the sufficient statistic
    of c pulls.
    """
    g = as_generator(rng)
    m, n = cfg.n_voters, cfg.n_alternatives
    prior = cfg.mu_prior
    mu = prior.mean + math.sqrt(prior.variance) * g.standard_normal((size, n))
    counts = g.integers(cfg.count_min, cfg.count_max, size=(size, m, n), endpoint=True)
    noise = g.standard_normal((size, m, n))
    x = mu[:, None, :] + np.sqrt(cfg.obs_variance / counts) * noise
    return mu, counts, x


def sample_instance(cfg: SimConfig, rng: SeededRng | np.random.Generator) -> Instance:
    mu, counts, x = sample_arrays(cfg, 1, rng)
    mu, counts, x = mu[0], counts[0], x[0]
    truth = GroundTruth(mu, np.full(cfg.n_alternatives, float(cfg.obs_variance)))
    votes = VoteSet(derive_ranking(x))
    return Instance(truth, counts, x, votes, int(np.argmax(mu)))


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def perturb_counts_percentage(counts, rng, max_pct: float = 0.5,
                              u: np.ndarray | None = None) -> np.ndarray:
    """Scale every count by (1 + u), u ~ U(-max_pct, max_pct), round, floor at 1.

    ``u`` may be supplied directly to bypass sampling.
    """
    if not 0 <= max_pct < 1:
        raise ValueError("max_pct must lie in [0, 1)")
    counts = np.asarray(counts, dtype=np.int64)
    if u is None:
        u = as_generator(rng).uniform(-max_pct, max_pct, size=counts.shape)
    scaled = _round_half_away(counts * (1.0 + np.asarray(u, dtype=float)))
    return np.maximum(scaled, 1).astype(np.int64)


def perturb_counts_replacement(counts, rng, frac: float = 1 / 3,
                               resample_min: int = 1, resample_max: int = COUNT_MAX) -> np.ndarray:
    """Overwrite exactly round(frac * counts.size) cells with fresh uniform counts."""
    if not 0 <= frac <= 1:
        raise ValueError("frac must lie in [0, 1]")
    if not 1 <= resample_min <= resample_max:
        raise ValueError("require 1 <= resample_min <= resample_max")
    counts = np.asarray(counts, dtype=np.int64)
    out = counts.copy()
    k = int(math.floor(frac * counts.size + 0.5))
    if k == 0:
        return out
    g = as_generator(rng)
    cells = g.choice(counts.size, size=k, replace=False)
    out.reshape(-1)[cells] = g.integers(resample_min, resample_max, size=k, endpoint=True)
    return out


def write_instances(instances: Iterable[Instance], fh: IO[str]) -> int:
    n = 0
    for inst in instances:
        fh.write(json.dumps(inst.to_json(), separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def read_instances(fh: IO[str]) -> Iterator[Instance]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield Instance.from_json(json.loads(line))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"line {lineno}: malformed instance ({exc})") from exc
