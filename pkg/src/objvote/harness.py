"""Seed-paired evaluation of voting rules and reproduction of the regret tables.

Instance ``i`` of an experiment is fully determined by ``(master_seed, i)``:
sampling, count noise and each rule's own randomness draw from separate
child streams, so every rule sees the same elections and adding or removing
rules never shifts anyone else's random numbers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .core import SeededRng, argmax_random_tiebreak
from .registry import (
    DISPLAY_NAMES,
    MODEL_RULES,
    PLUS_RULES,
    RULE_NAMES,
    RuleInput,
    RuleOptions,
    make_rule,
)
from .rules.baseline import CountModification
from .simulation import (
    Instance,
    SimConfig,
    perturb_counts_percentage,
    perturb_counts_replacement,
    sample_instance,
)

log = logging.getLogger(__name__)

# child-stream tags under SeededRng(master_seed, i)
SAMPLE, NOISE, RULE, TUNING = 0, 1, 2, 3

DEFAULT_INSTANCES = 20_000
TUNING_INSTANCES = 5_000
THREADS_ENV = "OBJVOTE_THREADS"


@dataclass(frozen=True)
class CountNoise:
    kind: str = "none"  # none | percentage | replacement
    amount: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "percentage", "replacement"):
            raise ValueError(f"unknown count noise {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> CountNoise:
        """``none``, ``percentage[:0.5]`` or ``replacement[:1/3]``."""
        kind, _, amount = text.partition(":")
        if kind == "none":
            return cls()
        if kind == "percentage":
            return cls(kind, float(Fraction(amount)) if amount else 0.5)
        if kind == "replacement":
            return cls(kind, float(Fraction(amount)) if amount else 1 / 3)
        raise ValueError(f"unknown count noise {text!r}")

    def apply(self, counts: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        if self.kind == "percentage":
            return perturb_counts_percentage(counts, gen, self.amount)
        if self.kind == "replacement":
            return perturb_counts_replacement(counts, gen, self.amount)
        return counts

    def __str__(self) -> str:
        return self.kind if self.kind == "none" else f"{self.kind}:{self.amount:g}"


@dataclass(frozen=True)
class ExperimentSpec:
    sim: SimConfig = field(default_factory=SimConfig)
    voter_counts: tuple[int, ...] = (3, 10, 30, 100, 300)
    n_instances: int = DEFAULT_INSTANCES
    rules: tuple[str, ...] = ()
    count_noise: CountNoise = field(default_factory=CountNoise)
    master_seed: int = 0
    mc_samples: int = 100
    tuning_instances: int = TUNING_INSTANCES

    def __post_init__(self):
        unknown = [r for r in self.rules if r not in RULE_NAMES]
        if unknown:
            raise ValueError(f"unregistered rules: {unknown}")
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")
        if any(m < 1 for m in self.voter_counts):
            raise ValueError("voter counts must be >= 1")
        if self.mc_samples < 1 or self.tuning_instances < 1:
            raise ValueError("mc_samples and tuning_instances must be >= 1")

    def sim_for(self, m: int) -> SimConfig:
        return replace(self.sim, n_voters=m)


@dataclass(frozen=True)
class RegretSummary:
    rule_name: str
    mean_regret: float
    accuracy: float
    std_error: float
    n_instances: int
    n_voters: int = 0
    detail: str = ""

    @classmethod
    def from_samples(cls, name: str, regrets: np.ndarray, hits: np.ndarray,
                     n_voters: int = 0, detail: str = "") -> RegretSummary:
        n = regrets.size
        se = float(regrets.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(name, float(regrets.mean()), float(hits.mean()), se, n, n_voters, detail)


def pooled_se(a: RegretSummary, b: RegretSummary) -> float:
    return math.hypot(a.std_error, b.std_error)


def _rule_tag(name: str) -> int:
    return zlib.crc32(name.encode())


def instance_digest(inst: Instance) -> str:
    h = hashlib.sha1()
    for arr in (inst.truth.mu, inst.counts, inst.estimates):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


@dataclass
class ColumnResult:
    regrets: dict[str, np.ndarray]
    hits: dict[str, np.ndarray]
    digests: list[str] | None = None


def _make_rules(names: Sequence[str], options: RuleOptions):
    return [(name, make_rule(name, options), _rule_tag(name)) for name in names]


def _evaluate_range(sim: SimConfig, noise: CountNoise, rules, seed: int, sub: tuple[int, ...],
                    start: int, stop: int, instances: Sequence[Instance] | None,
                    keep_digests: bool):
    k = stop - start
    regrets = np.empty((len(rules), k))
    hits = np.empty((len(rules), k), dtype=bool)
    digests = [] if keep_digests else None
    for pos, i in enumerate(range(start, stop)):
        base = SeededRng(seed, i, sub)
        if instances is None:
            inst = sample_instance(sim, base.child(SAMPLE))
        else:
            inst = instances[pos]
        seen = noise.apply(inst.counts, base.child(NOISE).generator())
        inp = RuleInput(inst.votes, seen, inst.estimates, inst.truth.sigma2)
        mu = inst.truth.mu
        best = mu[inst.optimal]
        for r, (_, rule, tag) in enumerate(rules):
            gen = base.child(RULE, tag).generator()
            scores = rule(inp, gen)
            choice = argmax_random_tiebreak(scores, gen)
            regrets[r, pos] = best - mu[choice]
            hits[r, pos] = choice == inst.optimal
        if digests is not None:
            digests.append(instance_digest(inst))
    return regrets, hits, digests


def _worker(args):
    sim, noise, names, options, seed, sub, start, stop, instances, keep = args
    rules = _make_rules(names, options)
    return _evaluate_range(sim, noise, rules, seed, sub, start, stop, instances, keep)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def evaluate_column(sim: SimConfig, rule_names: Sequence[str], n_instances: int, seed: int,
                    options: RuleOptions | None = None, noise: CountNoise = CountNoise(),
                    sub: tuple[int, ...] = (), threads: int | None = None,
                    instances: Sequence[Instance] | None = None,
                    keep_digests: bool = False) -> ColumnResult:
    """Per-instance regrets of several rules on one shared set of elections.

    Work is split into contiguous index ranges and reassembled in index order,
    so results do not depend on ``threads``.
    """
    options = options or RuleOptions()
    names = list(rule_names)
    if instances is not None:
        n_instances = len(instances)
    threads = default_threads() if threads is None else max(1, threads)
    bounds = np.linspace(0, n_instances, min(threads, n_instances) + 1).astype(int)
    jobs = [(sim, noise, names, options, seed, sub, int(a), int(b),
             None if instances is None else instances[a:b], keep_digests)
            for a, b in zip(bounds[:-1], bounds[1:])]
    if len(jobs) == 1:
        parts = [_worker(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            parts = list(pool.map(_worker, jobs))
    regrets = np.concatenate([p[0] for p in parts], axis=1) if names else np.empty((0, n_instances))
    hits = np.concatenate([p[1] for p in parts], axis=1) if names else np.empty((0, n_instances))
    digests = [d for p in parts for d in p[2]] if keep_digests else None
    return ColumnResult({n: regrets[k] for k, n in enumerate(names)},
                        {n: hits[k] for k, n in enumerate(names)}, digests)


def select_best_modification(base: str, spec: ExperimentSpec, n_voters: int,
                             threads: int | None = None) -> tuple[CountModification, dict[str, float]]:
    """Count modification with the lowest regret on a dedicated tuning stream.

    Candidates share one tie-breaking stream, so equal-weight candidates
    produce identical decisions; ties go to the first in enumeration order.
    """
    plus = {v: k for k, v in PLUS_RULES.items()}[base]
    mods = list(CountModification)
    options = RuleOptions(mc_samples=spec.mc_samples)
    sim = spec.sim_for(n_voters)
    tuned = {}
    for mod in mods:
        options.modifications = {plus: mod}
        col = evaluate_column(sim, [plus], spec.tuning_instances, spec.master_seed, options,
                              spec.count_noise, sub=(TUNING,), threads=threads)
        tuned[mod.value] = float(col.regrets[plus].mean())
    best = mods[0]
    for mod in mods[1:]:
        if tuned[mod.value] < tuned[best.value]:
            best = mod
    return best, tuned


def evaluate_rule(rule: str, spec: ExperimentSpec, n_voters: int,
                  options: RuleOptions | None = None, threads: int | None = None,
                  instances: Sequence[Instance] | None = None) -> RegretSummary:
    if rule not in RULE_NAMES:
        raise ValueError(f"unknown rule {rule!r}")
    options = options or RuleOptions(mc_samples=spec.mc_samples)
    detail = ""
    if rule in PLUS_RULES and rule not in options.modifications:
        mod, _ = select_best_modification(PLUS_RULES[rule], spec, n_voters, threads)
        options = replace(options, modifications={**options.modifications, rule: mod})
        detail = mod.value
    col = evaluate_column(spec.sim_for(n_voters), [rule], spec.n_instances, spec.master_seed,
                          options, spec.count_noise, threads=threads, instances=instances)
    return RegretSummary.from_samples(rule, col.regrets[rule], col.hits[rule], n_voters, detail)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    summaries: dict[tuple[str, int], RegretSummary] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def table_rows(self) -> list[list]:
        rows = []
        for rule in self.spec.rules:
            row = [DISPLAY_NAMES[rule]]
            for m in self.spec.voter_counts:
                s = self.summaries.get((rule, m))
                row.append(s.mean_regret if s is not None else float("nan"))
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rule", *self.spec.voter_counts])
        for row in self.table_rows():
            w.writerow([row[0], *(f"{v:.4f}" if not math.isnan(v) else "" for v in row[1:])])
        return buf.getvalue()

    def to_json(self) -> str:
        spec = self.spec
        doc = {
            "spec": {
                "sim": {**asdict(spec.sim), "n_voters": None},
                "voter_counts": list(spec.voter_counts),
                "n_instances": spec.n_instances,
                "rules": list(spec.rules),
                "count_noise": str(spec.count_noise),
                "master_seed": spec.master_seed,
                "mc_samples": spec.mc_samples,
                "tuning_instances": spec.tuning_instances,
            },
            "skipped": self.skipped,
            "results": [asdict(s) for s in self.summaries.values()],
        }
        return json.dumps(doc, indent=2)

    def format(self) -> str:
        width = max([len(r[0]) for r in self.table_rows()] + [10])
        lines = [f"{'Num voters':<{width}}" + "".join(f"{m:>9}" for m in self.spec.voter_counts)]
        for row in self.table_rows():
            lines.append(f"{row[0]:<{width}}" + "".join(f"{v:9.4f}" for v in row[1:]))
        return "\n".join(lines)


def run_experiment(spec: ExperimentSpec, options: RuleOptions | None = None,
                   threads: int | None = None,
                   on_column: Callable[[ExperimentResult], None] | None = None,
                   raw: dict | None = None) -> ExperimentResult:
    """Every rule at every voter count; ``on_column`` fires after each finished column.

    Rules needing a model that was not supplied are skipped (left blank in
    the table). If ``raw`` is a dict it receives per-instance regrets keyed
    ``"<rule>@<m>"``.
    """
    options = options or RuleOptions(mc_samples=spec.mc_samples)
    options = replace(options, mc_samples=spec.mc_samples)
    result = ExperimentResult(spec)
    runnable = []
    for r in spec.rules:
        if r in MODEL_RULES and r not in options.models:
            log.warning("no model supplied for %s; leaving its row empty", r)
            result.skipped.append(r)
        else:
            runnable.append(r)
    for m in spec.voter_counts:
        opts = replace(options, modifications=dict(options.modifications))
        details = {}
        for plus, base in PLUS_RULES.items():
            if plus in runnable and plus not in options.modifications:
                mod, _ = select_best_modification(base, spec, m, threads)
                opts.modifications[plus] = mod
                details[plus] = mod.value
        col = evaluate_column(spec.sim_for(m), runnable, spec.n_instances, spec.master_seed,
                              opts, spec.count_noise, threads=threads)
        for r in runnable:
            result.summaries[(r, m)] = RegretSummary.from_samples(
                r, col.regrets[r], col.hits[r], m, details.get(r, ""))
            if raw is not None:
                raw[f"{r}@{m}"] = col.regrets[r]
        log.info("finished m=%d", m)
        if on_column is not None:
            on_column(result)
    return result


PRESETS = ("1a", "1b", "2a", "2b")


def load_preset(name: str, n_instances: int = DEFAULT_INSTANCES, seed: int = 0,
                mc_samples: int | None = None, voter_counts: Sequence[int] | None = None) -> ExperimentSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    doc = json.loads(resources.files("objvote.presets").joinpath(f"table_{name}.json").read_text())
    sim = SimConfig(n_alternatives=doc["n_alternatives"], obs_variance=doc["obs_variance"],
                    count_min=doc.get("count_min", 1), count_max=doc.get("count_max", 50))
    return ExperimentSpec(
        sim=sim,
        voter_counts=tuple(voter_counts or doc["voter_counts"]),
        n_instances=n_instances,
        rules=tuple(doc["rules"]),
        count_noise=CountNoise.parse(doc["count_noise"]),
        master_seed=seed,
        mc_samples=mc_samples or doc.get("mc_samples", 100),
        tuning_instances=doc.get("tuning_instances", TUNING_INSTANCES),
    )
