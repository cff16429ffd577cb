import json
import math
import numpy as np
import pytest

from objvote.harness import (
    PRESETS,
    CountNoise,
    ExperimentSpec,
    RegretSummary,
    evaluate_column,
    evaluate_rule,
    load_preset,
    pooled_se,
    run_experiment,
    select_best_modification,
)
from objvote.learned import DeepSetModel
from objvote.registry import ANONYMOUS, RULE_NAMES, RuleOptions, make_rule
from objvote.rules.baseline import CountModification
from objvote.simulation import SimConfig

CHEAP = ["case1-oracle", "borda", "case4", "case4-norm", "plurality", "case5-lb", "case5-zero",
         "uniform-random"]


def test_noise_free_rules_are_optimal():
    names = ["case1-oracle", "borda", "plurality", "case5-zero"]
    col = evaluate_column(SimConfig(n_voters=5, obs_variance=0.0), names, 200, 3)
    for name, r in col.regrets.items():
        np.testing.assert_array_equal(r, 0.0, err_msg=name)
        assert col.hits[name].all()


def test_regret_nonnegative_and_summary_stats():
    col = evaluate_column(SimConfig(n_voters=4), CHEAP, 300, 5)
    for name in CHEAP:
        r = col.regrets[name]
        assert np.all(r >= 0)
        s = RegretSummary.from_samples(name, r, col.hits[name])
        assert s.std_error == pytest.approx(r.std(ddof=1) / math.sqrt(r.size))
        assert 0 <= s.accuracy <= 1 and s.n_instances == 300


def test_rules_see_identical_instances():
    sim = SimConfig(n_voters=6)
    a = evaluate_column(sim, ["borda"], 50, 11, keep_digests=True)
    b = evaluate_column(sim, ["case4", "case5-mc", "plurality"], 50, 11, keep_digests=True)
    assert a.digests == b.digests
    np.testing.assert_array_equal(a.regrets["borda"],
                                  evaluate_column(sim, ["case4", "borda"], 50, 11).regrets["borda"])
    other = evaluate_column(sim, ["borda"], 50, 12, keep_digests=True)
    assert other.digests != a.digests


def test_results_independent_of_thread_count():
    sim = SimConfig(n_voters=5)
    one = evaluate_column(sim, ["case5-mc", "plurality"], 40, 2, threads=1)
    two = evaluate_column(sim, ["case5-mc", "plurality"], 40, 2, threads=2)
    for name in one.regrets:
        np.testing.assert_array_equal(one.regrets[name], two.regrets[name])


def test_count_noise_leaves_anonymous_rules_untouched():
    sim = SimConfig(n_voters=8)
    names = sorted(ANONYMOUS) + ["case4"]
    clean = evaluate_column(sim, names, 300, 4)
    for noise in (CountNoise("percentage", 0.5), CountNoise("replacement", 1 / 3)):
        noisy = evaluate_column(sim, names, 300, 4, noise=noise)
        for name in ANONYMOUS:
            np.testing.assert_array_equal(noisy.regrets[name], clean.regrets[name])
        assert not np.array_equal(noisy.regrets["case4"], clean.regrets["case4"])


def test_count_noise_parse():
    assert CountNoise.parse("none") == CountNoise()
    assert CountNoise.parse("percentage") == CountNoise("percentage", 0.5)
    assert CountNoise.parse("replacement:1/3").amount == pytest.approx(1 / 3)
    assert str(CountNoise.parse("percentage:0.25")) == "percentage:0.25"
    with pytest.raises(ValueError):
        CountNoise.parse("gaussian")


def test_empty_rules_give_empty_table():
    res = run_experiment(ExperimentSpec(n_instances=5, rules=()))
    assert res.summaries == {}
    assert res.to_csv() == "rule,3,10,30,100,300\n"
    assert json.loads(res.to_json())["results"] == []


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(rules=("kemeny",))
    with pytest.raises(ValueError):
        ExperimentSpec(n_instances=0)


def test_tuning_is_deterministic_and_held_out():
    spec = ExperimentSpec(sim=SimConfig(), n_instances=100, tuning_instances=200, master_seed=3)
    a = select_best_modification("borda", spec, 5)
    b = select_best_modification("borda", spec, 5)
    assert a == b
    assert set(a[1]) == {m.value for m in CountModification}
    assert a[1][a[0].value] == min(a[1].values())


def test_equal_counts_make_modifications_tie():
    sim = SimConfig(count_min=9, count_max=9)
    spec = ExperimentSpec(sim=sim, n_instances=50, tuning_instances=300)
    for base in ("plurality", "borda"):
        mod, tuned = select_best_modification(base, spec, 7)
        assert len(set(tuned.values())) == 1
        assert mod is CountModification.ARITHMETIC


def test_plus_rules_are_tuned_per_column():
    spec = ExperimentSpec(n_instances=100, voter_counts=(3, 30), rules=("borda+", "plurality+"),
                          tuning_instances=200)
    res = run_experiment(spec)
    for key, s in res.summaries.items():
        assert s.detail in {m.value for m in CountModification}
    summary = evaluate_rule("borda+", spec, 3)
    assert summary.mean_regret == res.summaries[("borda+", 3)].mean_regret


def test_model_rules_skipped_without_model():
    spec = ExperimentSpec(n_instances=20, voter_counts=(3,), rules=("borda", "learned"))
    res = run_experiment(spec)
    assert res.skipped == ["learned"]
    assert res.to_csv().splitlines()[2] == "Learned,"
    model = DeepSetModel.zeros(hidden_width=2, encoder_layers=1, decoder_layers=1)
    res = run_experiment(spec, RuleOptions(models={"learned": model}))
    assert res.skipped == []
    s = res.summaries[("learned", 3)]
    assert s.n_instances == 20 and s.mean_regret >= 0


def test_registry_covers_rule_names():
    for name in RULE_NAMES:
        if name in ("plurality+", "borda+", "learned", "learned-noisy"):
            with pytest.raises(ValueError):
                make_rule(name)
        else:
            make_rule(name)
    with pytest.raises(ValueError):
        make_rule("veto")


def test_presets_load():
    for name in PRESETS:
        spec = load_preset(name, n_instances=10, seed=2)
        assert spec.sim.n_alternatives == 10
        assert spec.voter_counts == (3, 10, 30, 100, 300)
    assert load_preset("1b").sim.obs_variance == 10
    assert load_preset("2a").count_noise == CountNoise("percentage", 0.5)
    assert load_preset("2b").count_noise.kind == "replacement"
    assert len(load_preset("1a").rules) == 11
    with pytest.raises(ValueError):
        load_preset("3c")


def test_uniform_random_two_alternatives_small():
    col = evaluate_column(SimConfig(n_alternatives=2, n_voters=1), ["uniform-random"], 20_000, 8)
    r = col.regrets["uniform-random"]
    assert abs(r.mean() - 1 / math.sqrt(math.pi)) <= 4 * r.std(ddof=1) / math.sqrt(r.size)


@pytest.mark.slow
def test_regret_non_increasing_in_voters(table_1a):
    ms = table_1a.spec.voter_counts
    for rule in table_1a.spec.rules:
        for a, b in zip(ms[:-1], ms[1:]):
            sa, sb = table_1a.summaries[(rule, a)], table_1a.summaries[(rule, b)]
            assert sa.mean_regret - sb.mean_regret > -2 * pooled_se(sa, sb), (rule, a, b)


@pytest.mark.slow
def test_oracle_within_noise_of_every_rule(table_1a):
    for m in table_1a.spec.voter_counts:
        oracle = table_1a.summaries[("case1-oracle", m)]
        for rule in table_1a.spec.rules:
            s = table_1a.summaries[(rule, m)]
            assert oracle.mean_regret <= s.mean_regret + 2 * pooled_se(oracle, s), (rule, m)
