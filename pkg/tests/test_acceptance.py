"""End-to-end acceptance checks; each prints one PASS/FAIL line in the session summary."""

import math
import os
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPT_INSTANCES, ACCEPT_SEED, record_criterion, run_preset
from objvote.core import SeededRng
from objvote.harness import RegretSummary, evaluate_column, pooled_se
from objvote.learned import (
    DeepSetModel,
    ModelFileError,
    TrainConfig,
    load_model_with_meta,
    loss_and_grad,
    save_model,
    train,
)
from objvote.registry import RuleOptions
from objvote.rules.mle import (
    Case3Query,
    Decision,
    case3_decide,
    case3_loglik,
    case3_spread,
    case3_statistic,
    case3_weight,
    case5_monte_carlo,
    positivity_functions,
)
from objvote.simulation import SimConfig, sample_instance

pytestmark = pytest.mark.slow

MODEL_PATH = Path(__file__).resolve().parents[1] / "models" / "deepset_default_seed0.json"
GRID = np.round(np.arange(-10_000, 10_001) * 1e-3, 12)

PRESET_1A_TARGETS = {  # rule: (m=3, m=300)
    "case1-oracle": (1.1642, 0.0936),
    "borda": (1.2116, 0.1385),
    "case4": (1.1760, 0.1177),
    "case4-norm": (1.1879, 0.1173),
    "plurality": (1.3509, 0.3807),
    "case5-zero": (1.2847, 0.3193),
    "case5-mc": (1.2848, 0.3178),
}


def check(criterion: int, ok: bool, detail: str) -> None:
    record_criterion(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def below(a: RegretSummary, b: RegretSummary, k: float = 2.0) -> bool:
    """True when a's mean regret is below b's by more than k pooled standard errors."""
    return b.mean_regret - a.mean_regret > k * pooled_se(a, b)


def not_above(a: RegretSummary, b: RegretSummary) -> bool:
    return b.mean_regret - a.mean_regret > -2 * pooled_se(a, b)


def two_arm(seed: int, m: int):
    inst = sample_instance(SimConfig(n_alternatives=2, n_voters=m), SeededRng(seed))
    y = (inst.votes.top_choices == 0).astype(float)
    w = np.array([case3_weight(a, b) for a, b in inst.counts])
    return inst, y, w


def test_criterion_01_table_1a_values(table_1a):
    bad, worst = [], 0.0
    for rule, targets in PRESET_1A_TARGETS.items():
        for m, target in zip((3, 300), targets):
            got = table_1a.summaries[(rule, m)].mean_regret
            worst = max(worst, abs(got - target))
            if abs(got - target) > 0.03:
                bad.append(f"{rule}@{m}={got:.4f} (target {target})")
    check(1, not bad, f"14 cells within 0.03 of targets, max |diff| {worst:.4f} {bad or ''}".strip())


def test_criterion_02_rule_ordering(table_1a):
    pairs = [("case1-oracle", "case4"), ("case1-oracle", "case4-norm"), ("case4", "borda"),
             ("case4-norm", "borda"), ("case5-zero", "plurality"), ("case5-mc", "plurality")]
    bad = []
    for m in table_1a.spec.voter_counts:
        for a, b in pairs:
            if not not_above(table_1a.summaries[(a, m)], table_1a.summaries[(b, m)]):
                bad.append(f"{a}>{b}@{m}")
    check(2, not bad, f"{len(pairs)} orderings x 5 voter counts hold within -2 pooled SE {bad or ''}".strip())


def test_criterion_03_low_variance_normalization():
    res = run_preset("1b", rules=("case4", "case4-norm"), voter_counts=(3,))
    norm, raw = res.summaries[("case4-norm", 3)], res.summaries[("case4", 3)]
    ok = abs(norm.mean_regret - 0.1479) <= 0.015 and below(norm, raw)
    check(3, ok, f"case4-norm {norm.mean_regret:.4f} (target 0.1479 +/- 0.015), case4 {raw.mean_regret:.4f}, "
                 f"gap {(raw.mean_regret - norm.mean_regret) / pooled_se(norm, raw):.1f} SE")


def test_criterion_04_percentage_noise():
    res = run_preset("2a", rules=("case4", "borda"), voter_counts=(300,))
    c4, borda = res.summaries[("case4", 300)], res.summaries[("borda", 300)]
    ok = abs(c4.mean_regret - 0.1184) <= 0.015 and below(c4, borda)
    check(4, ok, f"case4 {c4.mean_regret:.4f} (target 0.1184 +/- 0.015), borda {borda.mean_regret:.4f}, "
                 f"gap {(borda.mean_regret - c4.mean_regret) / pooled_se(c4, borda):.1f} SE")


def test_criterion_05_replacement_noise():
    res = run_preset("2b", rules=("case5-lb", "plurality"), voter_counts=(300,))
    lb, plu = res.summaries[("case5-lb", 300)], res.summaries[("plurality", 300)]
    check(5, below(plu, lb), f"case5-lb {lb.mean_regret:.4f} vs plurality {plu.mean_regret:.4f}, "
                             f"gap {(lb.mean_regret - plu.mean_regret) / pooled_se(lb, plu):.1f} SE")


def grid_mle(s, y, rounds: int = 6) -> float:
    """Grid argmax of the concave log-likelihood, zooming in around the best point each round."""
    lo, hi = -10.0, 10.0
    best = 0.0
    for _ in range(rounds):
        grid = np.linspace(lo, hi, 20_001)
        best = float(grid[int(np.argmax(case3_loglik(Case3Query(grid, s, y))))])
        step = grid[1] - grid[0]
        lo, hi = best - step, best + step
    return best


def test_criterion_06_case3_grid_mle():
    checked = agree = 0
    for seed in range(1000):
        inst, y, w = two_arm(10_000 + seed, int(1 + seed % 25))
        if abs(case3_statistic(y, w)) <= 1e-6:
            continue
        s = case3_spread(inst.counts[:, 0], inst.counts[:, 1])
        best = grid_mle(s, y)
        agree += (best > 0) == (case3_decide(y, w) is Decision.ARM2)
        checked += 1
    check(6, checked > 0 and agree == checked, f"{agree}/{checked} decisions match the grid MLE")


def test_criterion_07_concavity_and_positivity():
    g = np.random.default_rng(77)
    worst = -np.inf
    for _ in range(200):
        m = int(g.integers(1, 25))
        q = Case3Query(GRID, g.uniform(0.2, 8.0, m), g.integers(0, 2, m))
        f = case3_loglik(q)
        worst = max(worst, float(np.max(f[2:] - 2 * f[1:-1] + f[:-2])))
    p, q = positivity_functions(GRID)
    low = float(min(p.min(), q.min()))
    check(7, worst <= 1e-8 and low > 0,
          f"max second difference {worst:.2e} over 200 queries, min positivity value {low:.2e}")


def _numeric_grad(model, batch, h=1e-5):
    out = []
    for p in model.params:
        gp = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up, _ = loss_and_grad(model, batch)
            p[idx] = orig - h
            dn, _ = loss_and_grad(model, batch)
            p[idx] = orig
            gp[idx] = (up - dn) / (2 * h)
        out.append(gp)
    return out


def test_criterion_08_gradient_check():
    g = np.random.default_rng(88)
    errors = []
    for k in range(20):
        model = DeepSetModel.initialize(g, hidden_width=int(g.integers(3, 9)),
                                        encoder_layers=int(g.integers(1, 4)),
                                        decoder_layers=int(g.integers(1, 3)),
                                        pool=("max", "mean")[k % 2], voter_agg=("sum", "mean")[k // 2 % 2])
        batch = []
        for _ in range(3):
            m, n = int(g.integers(2, 7)), int(g.integers(2, 6))
            batch.append((g.uniform(0, 1, (m, n, 2)), int(g.integers(n))))
        _, grads = loss_and_grad(model, batch)
        a = np.concatenate([x.ravel() for x in grads])
        b = np.concatenate([x.ravel() for x in _numeric_grad(model, batch)])
        errors.append(float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    check(8, max(errors) <= 1e-4, f"max relative gradient error {max(errors):.2e} over 20 model/batch pairs")


def _default_model() -> DeepSetModel:
    cfg = TrainConfig()
    if os.environ.get("OBJVOTE_RETRAIN") != "1":
        try:
            model, meta = load_model_with_meta(MODEL_PATH)
            if meta.get("seed") == 0 and TrainConfig.from_dict(meta["train_config"]) == cfg:
                return model
        except (ModelFileError, KeyError, ValueError):
            pass
    model = train(cfg, SeededRng(0))
    MODEL_PATH.parent.mkdir(exist_ok=True)
    save_model(model, MODEL_PATH, meta={"train_config": cfg.to_dict(), "seed": 0})
    return model


def test_criterion_09_learned_beats_borda():
    options = RuleOptions(models={"learned": _default_model()})
    col = evaluate_column(SimConfig(n_alternatives=10, n_voters=100), ["learned", "borda"], 10_000,
                          seed=ACCEPT_SEED + 900, options=options)
    learned = float(col.regrets["learned"].mean())
    borda = float(col.regrets["borda"].mean())
    check(9, borda - learned >= 0.02, f"learned {learned:.4f} vs borda {borda:.4f} at m=100 "
                                      f"(margin {borda - learned:.4f}, need >= 0.02)")


def test_criterion_10_uniform_random_calibration():
    col = evaluate_column(SimConfig(n_alternatives=2, n_voters=1), ["uniform-random"], 100_000,
                          seed=ACCEPT_SEED)
    got = float(col.regrets["uniform-random"].mean())
    check(10, abs(got - 1 / math.sqrt(math.pi)) <= 0.01, f"uniform-random n=2 regret {got:.4f} "
                                                         f"(target {1 / math.sqrt(math.pi):.4f} +/- 0.01)")


def test_criterion_11_mc_agrees_with_case3():
    agree = total = 0
    for seed in range(ACCEPT_INSTANCES // 10):
        inst, y, w = two_arm(50_000 + seed, int(1 + seed % 30))
        G = case3_statistic(y, w)
        if abs(G) <= 0.1:
            continue
        s = case5_monte_carlo(inst.votes.top_choices, inst.counts, inst.truth.sigma2, 100,
                              SeededRng(50_000 + seed, 2))
        agree += (s[1] - s[0] > 0) == (G > 0)
        total += 1
    check(11, agree / total >= 0.95, f"MC(100) agrees with the Case 3 decision on {agree}/{total} "
                                     f"= {agree / total:.3f} of instances with |G| > 0.1")
