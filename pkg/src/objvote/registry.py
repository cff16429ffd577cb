"""Named voting rules with a common call signature for the experiment harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .learned.model import DeepSetModel, featurize, logits
from .rules import baseline, mle
from .rules.baseline import CountModification
from .simulation import VoteSet


@dataclass(frozen=True)
class RuleInput:
    """Everything a rule may look at for one election.

    ``counts`` are the counts the rule is shown, which differ from the true
    counts under count noise.
    """

    votes: VoteSet
    counts: np.ndarray
    estimates: np.ndarray
    sigma2: np.ndarray


@dataclass
class RuleOptions:
    mc_samples: int = 100
    modifications: dict[str, CountModification] = field(default_factory=dict)
    models: dict[str, DeepSetModel] = field(default_factory=dict)


Rule = Callable[[RuleInput, np.random.Generator], np.ndarray]

DISPLAY_NAMES = {
    "case1-oracle": "Case 1 Oracle",
    "learned-noisy": "Learned (noisy)",
    "borda": "Borda",
    "borda+": "Borda+",
    "case4": "Case 4",
    "case4-norm": "Case 4 (normalized)",
    "learned": "Learned",
    "plurality": "Plurality",
    "plurality+": "Plurality+",
    "case5-lb": "Case 5 (lower bound)",
    "case5-zero": "Case 5 (zero approx)",
    "case5-mc": "Case 5 (Monte Carlo)",
    "uniform-random": "Uniform random",
}

RULE_NAMES = tuple(DISPLAY_NAMES)
ANONYMOUS = frozenset({"plurality", "borda", "uniform-random"})
PLUS_RULES = {"plurality+": "plurality", "borda+": "borda"}
MODEL_RULES = frozenset({"learned", "learned-noisy"})


def _learned(model: DeepSetModel) -> Rule:
    def rule(inp: RuleInput, gen):
        return logits(model, featurize(inp.votes, inp.counts)[None])[0]
    return rule


def _weighted(base: str, mod: CountModification) -> Rule:
    return lambda inp, gen: baseline.experience_weighted(base, inp.votes, inp.counts, mod)


def make_rule(name: str, options: RuleOptions | None = None) -> Rule:
    options = options or RuleOptions()
    if name == "plurality":
        return lambda inp, gen: baseline.plurality(inp.votes.top_choices, inp.votes.n)
    if name == "borda":
        return lambda inp, gen: baseline.borda(inp.votes.rankings)
    if name in PLUS_RULES:
        if name not in options.modifications:
            raise ValueError(f"{name} needs a selected count modification")
        return _weighted(PLUS_RULES[name], options.modifications[name])
    if name == "case1-oracle":
        return lambda inp, gen: mle.case1_oracle(inp.estimates, inp.counts)
    if name == "case4":
        return lambda inp, gen: mle.case4_scores(inp.votes, inp.counts, inp.sigma2)
    if name == "case4-norm":
        return lambda inp, gen: mle.case4_scores(inp.votes, inp.counts, inp.sigma2, normalized=True)
    if name == "case5-lb":
        return lambda inp, gen: mle.case5_lower_bound(inp.votes.top_choices, inp.counts, inp.sigma2)
    if name == "case5-zero":
        return lambda inp, gen: mle.case5_zero_approx(inp.votes.top_choices, inp.counts)
    if name == "case5-mc":
        k = options.mc_samples
        return lambda inp, gen: mle.case5_monte_carlo(inp.votes.top_choices, inp.counts,
                                                      inp.sigma2, k, gen)
    if name in MODEL_RULES:
        if name not in options.models:
            raise ValueError(f"{name} needs a trained model")
        return _learned(options.models[name])
    if name == "uniform-random":
        return lambda inp, gen: np.zeros(inp.votes.n)
    raise ValueError(f"unknown rule {name!r}; known rules: {', '.join(RULE_NAMES)}")
