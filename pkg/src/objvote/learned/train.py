"""Mini-batch training of the Deep Sets rule on freshly simulated elections."""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from ..core import SeededRng
from ..simulation import SimConfig, perturb_counts_percentage, sample_arrays
from .model import AdamState, DeepSetModel, adam_step, batch_loss_and_grad, featurize_arrays, logits

log = logging.getLogger(__name__)

# rng.child tags
_INIT, _BATCH, _FROZEN, _TRIALS = 0, 1, 2, 3

SEARCH_SPACE = {
    "learning_rate": [3e-3, 1e-3, 3e-4, 1e-4],
    "encoder_layers": [2, 3, 4],
    "decoder_layers": [0, 1, 2],
    "pool": ["max", "mean"],
    "voter_agg": ["mean", "sum"],
}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    max_batches: int = 5000
    voters_min: int = 5
    voters_max: int = 350
    alternatives_min: int = 5
    alternatives_max: int = 15
    obs_variance: float = 1000.0
    count_min: int = 1
    count_max: int = 50
    learning_rate: float = 3e-4
    encoder_layers: int = 4
    decoder_layers: int = 2
    pool: str = "max"
    voter_agg: str = "sum"
    hidden_width: int = 64
    count_noise_pct: float = 0.0  # > 0 trains the count-noise variant

    def __post_init__(self):
        if self.batch_size < 1 or self.max_batches < 0:
            raise ValueError("batch_size must be >= 1 and max_batches >= 0")
        if not 1 <= self.voters_min <= self.voters_max:
            raise ValueError("invalid voter range")
        if not 2 <= self.alternatives_min <= self.alternatives_max:
            raise ValueError("invalid alternative range")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.count_noise_pct < 1:
            raise ValueError("count_noise_pct must lie in [0, 1)")
        # architecture fields are validated by DeepSetModel
        DeepSetModel(**self.architecture())

    def architecture(self) -> dict:
        return dict(hidden_width=self.hidden_width, encoder_layers=self.encoder_layers,
                    decoder_layers=self.decoder_layers, pool=self.pool, voter_agg=self.voter_agg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def sample_batch(cfg: TrainConfig, gen: np.random.Generator,
                 m: int | None = None, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One same-shape mini-batch: features (B, m, n, 2) and optimal indices (B,)."""
    if m is None:
        m = int(gen.integers(cfg.voters_min, cfg.voters_max, endpoint=True))
    if n is None:
        n = int(gen.integers(cfg.alternatives_min, cfg.alternatives_max, endpoint=True))
    sim = SimConfig(n_alternatives=n, n_voters=m, count_min=cfg.count_min,
                    count_max=cfg.count_max, obs_variance=cfg.obs_variance)
    mu, counts, x = sample_arrays(sim, cfg.batch_size, gen)
    ranking = np.argsort(-x, axis=-1, kind="stable")
    positions = np.argsort(ranking, axis=-1)
    if cfg.count_noise_pct > 0:
        counts = perturb_counts_percentage(counts, gen, cfg.count_noise_pct)
    return featurize_arrays(positions, counts), mu.argmax(axis=-1)


def frozen_set(cfg: TrainConfig, rng: SeededRng, n_batches: int = 4) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed evaluation batches (512 examples at the default batch size)."""
    return [sample_batch(cfg, rng.child(_FROZEN, k).generator()) for k in range(n_batches)]


def frozen_loss(model: DeepSetModel, batches) -> float:
    total, count = 0.0, 0
    for z, t in batches:
        a = logits(model, z)
        a_max = a.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(a - a_max).sum(axis=-1)) + a_max[:, 0]
        total += float((lse - a[np.arange(len(t)), t]).sum())
        count += len(t)
    return total / count


def train(cfg: TrainConfig, rng: SeededRng,
          on_batch: Callable[[int, float, DeepSetModel], None] | None = None,
          model: DeepSetModel | None = None) -> DeepSetModel:
    """Adam on a stream of simulated batches; batch b draws from ``rng.child(1, b)``."""
    if model is None:
        model = DeepSetModel.initialize(rng.child(_INIT).generator(), **cfg.architecture())
    state = AdamState(lr=cfg.learning_rate)
    for b in range(cfg.max_batches):
        z, t = sample_batch(cfg, rng.child(_BATCH, b).generator())
        loss, grads = batch_loss_and_grad(model, z, t)
        model, state = adam_step(model, grads, state)
        log.debug("batch %d m=%d n=%d loss=%.4f", b, z.shape[1], z.shape[2], loss)
        if on_batch is not None:
            on_batch(b, loss, model)
    return model


def search_space_configs(space: dict | None = None) -> list[dict]:
    space = SEARCH_SPACE if space is None else space
    keys = sorted(space)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


@dataclass(frozen=True)
class Trial:
    overrides: dict
    loss: float


def run_search(space: dict | None, n_trials: int, rng: SeededRng,
               base: TrainConfig = TrainConfig(), trial_batches: int = 500) -> list[Trial]:
    """Train ``n_trials`` distinct configurations at a reduced budget.

    Every trial sees the same training stream and frozen set, so losses are
    directly comparable.
    """
    grid = search_space_configs(space)
    if not 1 <= n_trials <= len(grid):
        raise ValueError(f"n_trials must lie in [1, {len(grid)}]")
    picks = rng.child(_TRIALS).generator().choice(len(grid), size=n_trials, replace=False)
    frozen = frozen_set(base, rng)
    trials = []
    for k, idx in enumerate(picks):
        overrides = grid[int(idx)]
        cfg = replace(base, max_batches=trial_batches, **overrides)
        model = train(cfg, rng)
        loss = frozen_loss(model, frozen)
        log.info("trial %d/%d %s frozen loss %.4f", k + 1, n_trials, overrides, loss)
        trials.append(Trial(overrides, loss))
    return trials


def hyperparameter_search(space: dict | None, n_trials: int, rng: SeededRng,
                          base: TrainConfig = TrainConfig(), trial_batches: int = 500) -> TrainConfig:
    trials = run_search(space, n_trials, rng, base, trial_batches)
    best = min(trials, key=lambda tr: tr.loss)
    return replace(base, **best.overrides)
