"""Maximum-likelihood scoring rules under the bandit noise model.

All rules return raw score vectors; the caller picks the winner with
:func:`objvote.core.argmax_random_tiebreak`. Arm variances enter only through
``sigma2`` (defaults to equal unit variances, under which every rule except
the Monte Carlo one is scale-free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from ..core import LOG_SQRT_2PI, as_generator, std_log_cdf
from ..simulation import VoteSet

F_CLAMP = 1e-12
TIE_TOL = 1e-12


class Decision(str, Enum):
    ARM1 = "arm1"
    ARM2 = "arm2"
    TIE = "tie"


@dataclass(frozen=True)
class Case3Query:
    """Two-arm ordinal data: delta = mu2_hat - mu1_hat, per-voter spreads s, and votes y.

    ``y[i] = 1`` means voter i ranked arm 1 first.
    """

    delta: float | np.ndarray
    s: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if s.shape != y.shape:
            raise ValueError("s and y must have the same length")
        if np.any(s <= 0):
            raise ValueError("every s_i must be > 0")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("y must be binary")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "y", y)


def _sigma2(sigma2, n: int) -> np.ndarray:
    if sigma2 is None:
        return np.ones(n)
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (n,))
    if np.any(s2 <= 0):
        raise ValueError("arm variances must be > 0")
    return s2


def _check_counts(counts, shape=None) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if c.ndim != 2:
        raise ValueError("counts must be an (m, n) matrix")
    if shape is not None and c.shape != tuple(shape):
        raise ValueError(f"counts shape {c.shape} != {tuple(shape)}")
    if np.any(c < 1):
        raise ValueError("counts must be >= 1")
    return c


def case1_oracle(estimates, counts) -> np.ndarray:
    """Pooled sample mean per arm: voters' means weighted by their pull counts."""
    x = np.asarray(estimates, dtype=float)
    c = _check_counts(counts, x.shape)
    return (c * x).sum(axis=0) / c.sum(axis=0)


def case2_weight(c1, c2, sigma2=None) -> float:
    """Inverse variance of a voter's reported difference x2 - x1."""
    if c1 < 1 or c2 < 1:
        raise ValueError("counts must be >= 1")
    s1, s2 = _sigma2(sigma2, 2)
    return (c2 * c1) / (s2 * c1 + s1 * c2)


def case3_weight(c1, c2, sigma2=None) -> float:
    return math.sqrt(case2_weight(c1, c2, sigma2))


def case3_spread(c1, c2, sigma2=None):
    """s_i, the standard deviation of x_i2 - x_i1 (vectorized over voters)."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    s1, s2 = _sigma2(sigma2, 2)
    return np.sqrt((s2 * c1 + s1 * c2) / (c1 * c2))


def case3_statistic(y, weights) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if y.shape != w.shape:
        raise ValueError("votes and weights must have the same length")
    return float(((1.0 - 2.0 * y) * w).sum())


def case3_decide(y, weights) -> Decision:
    """Sign of the two-arm log-likelihood slope at delta = 0."""
    g = case3_statistic(y, weights)
    if abs(g) <= TIE_TOL:
        return Decision.TIE
    return Decision.ARM2 if g > 0 else Decision.ARM1


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def case3_loglik(q: Case3Query):
    """Log-probability of the votes given delta; an array ``q.delta`` gives one value per entry."""
    # 1/2 + 1/2 erf(-delta/(s sqrt 2)) is Phi(-delta/s), evaluated as an exact log-CDF
    z = np.asarray(q.delta, dtype=float)[..., None] / q.s
    return _scalar_or_array((q.y * std_log_cdf(-z) + (1.0 - q.y) * std_log_cdf(z)).sum(axis=-1))


def case3_loglik_derivative(q: Case3Query):
    """d/d(delta) of :func:`case3_loglik`.

    With g_i = -2/(s_i sqrt(2 pi)) exp(-delta^2 / 2 s_i^2) and
    h_i^{+/-} = 1 +/- erf(-delta / (s_i sqrt 2)), the slope is
    sum_i y_i g_i / h_i^+ - (1 - y_i) g_i / h_i^-. Each ratio is evaluated as
    exp(log|g_i| - log h_i) so neither h underflows for large |delta| / s_i.
    """
    z = np.asarray(q.delta, dtype=float)[..., None] / q.s
    log_g = math.log(2.0) - LOG_SQRT_2PI - 0.5 * z * z - np.log(q.s)
    log_hp = math.log(2.0) + std_log_cdf(-z)
    log_hm = math.log(2.0) + std_log_cdf(z)
    f_plus = -np.exp(log_g - log_hp)
    f_minus = -np.exp(log_g - log_hm)
    return _scalar_or_array((q.y * f_plus - (1.0 - q.y) * f_minus).sum(axis=-1))


def positivity_functions(x) -> tuple[np.ndarray, np.ndarray]:
    """The two functions whose positivity makes :func:`case3_loglik` concave in delta.

    p(x) = -x (1 + erf(-x/sqrt 2)) + 2 phi(x) and q(x) = x (1 - erf(-x/sqrt 2)) + 2 phi(x),
    with phi the standard normal density.
    """
    x = np.asarray(x, dtype=float)
    two_phi = 2.0 * np.exp(-0.5 * x * x - LOG_SQRT_2PI)
    # 1 + erf(-x/sqrt2) = erfc(x/sqrt2) = 2 Phi(-x)
    p = -x * 2.0 * special.ndtr(-x) + two_phi
    q = x * 2.0 * special.ndtr(x) + two_phi
    return p, q


def pair_weights(counts, sigma2=None) -> np.ndarray:
    """W[i, j, k] = sqrt(c_ij c_ik / (s2_k c_ij + s2_j c_ik)), zero on the diagonal."""
    c = _check_counts(counts)
    s2 = _sigma2(sigma2, c.shape[1])
    cj = c[:, :, None]
    ck = c[:, None, :]
    w = np.sqrt(cj * ck / (s2[None, None, :] * cj + s2[None, :, None] * ck))
    idx = np.arange(c.shape[1])
    w[:, idx, idx] = 0.0
    return w


def case4_scores(votes: VoteSet, counts, sigma2=None, normalized: bool = False) -> np.ndarray:
    """Pairwise naive-independence rule: sum of signed pair weights per alternative.

    The normalized variant divides each alternative's total by the absolute
    weight it could have received, so every score lies in [-1, 1].
    """
    w = pair_weights(_check_counts(counts, votes.rankings.shape), sigma2)
    pos = votes.positions
    sign = np.where(pos[:, :, None] < pos[:, None, :], 1.0, -1.0)
    scores = _order_free_total(sign * w)
    if normalized:
        scores = scores / _order_free_total(w)
    return scores


def _order_free_total(w: np.ndarray) -> np.ndarray:
    """Per-alternative total of w[i, j, k] over voters i and partners k.

    Terms are sorted before summation so the result is bit-identical under any
    permutation of voters or alternatives.
    """
    per_alt = np.moveaxis(w, 1, 0).reshape(w.shape[1], -1)
    return np.sort(per_alt, axis=1).sum(axis=1)


def _check_tops(tops, n: int) -> np.ndarray:
    t = np.asarray(tops, dtype=np.int64).reshape(-1)
    if t.size and (t.min() < 0 or t.max() >= n):
        raise ValueError("top choice out of range")
    return t


def case5_lower_bound(tops, counts, sigma2=None) -> np.ndarray:
    """Pair weights applied only to the comparisons each voter's top choice reveals."""
    c = _check_counts(counts)
    t = _check_tops(tops, c.shape[1])
    if t.size != c.shape[0]:
        raise ValueError("one top choice per voter required")
    w = pair_weights(c, sigma2)[np.arange(t.size), t]  # (m, n) weights of top vs k
    scores = -w.sum(axis=0)
    np.add.at(scores, t, w.sum(axis=1))
    return scores


def case5_zero_approx(tops, counts) -> np.ndarray:
    """Each voter's top choice earns sqrt of the voter's count for it."""
    c = _check_counts(counts)
    t = _check_tops(tops, c.shape[1])
    if t.size != c.shape[0]:
        raise ValueError("one top choice per voter required")
    scores = np.zeros(c.shape[1])
    np.add.at(scores, t, np.sqrt(c[np.arange(t.size), t]))
    return scores


def case5_monte_carlo(tops, counts, sigma2=None, n_samples: int = 100, rng=None) -> np.ndarray:
    """Score-function estimate of the top-choice log-likelihood gradient at V_hat = 0.

    For voter i with top j, x ~ N(0, s2_j / c_ij) and s(x) = prod_{k != j} Phi_ik(x).
    The voter contributes E[g s + grad s] / E[s], where g = x c_ij / s2_j sits on
    component j and grad_k s = -phi_ik(x) prod_{h != j, k} Phi_ih(x). Expectations
    share the same samples; the denominator is clamped below at 1e-12.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    c = _check_counts(counts)
    m, n = c.shape
    t = _check_tops(tops, n)
    if t.size != m:
        raise ValueError("one top choice per voter required")
    s2 = _sigma2(sigma2, n)
    g = as_generator(rng)
    rows = np.arange(m)

    sd = np.sqrt(s2[None, :] / c)  # (m, n) sampling sd of each voter's arm means
    sd_top = sd[rows, t]
    x = sd_top[:, None] * g.standard_normal((m, n_samples))  # (m, S)
    z = x[:, :, None] / sd[:, None, :]  # (m, S, n)
    log_cdf = std_log_cdf(z)
    log_cdf[rows, :, t] = 0.0
    log_s = log_cdf.sum(axis=2)  # (m, S)

    # shift by the per-voter max of log s so ratios survive underflow of s itself
    shift = log_s.max(axis=1, keepdims=True)
    s_scaled = np.exp(log_s - shift)
    log_pdf = -0.5 * z * z - LOG_SQRT_2PI - np.log(sd)[:, None, :]
    grad_s = -np.exp(log_pdf + (log_s - shift)[:, :, None] - log_cdf)
    score_term = x * (c[rows, t] / s2[t])[:, None] * s_scaled
    grad_s[rows, :, t] = score_term

    num = grad_s.mean(axis=1)  # (m, n), scaled by exp(-shift)
    log_f = shift[:, 0] + np.log(s_scaled.mean(axis=1))
    scale = np.exp(shift[:, 0] - np.maximum(log_f, math.log(F_CLAMP)))
    return (num * scale[:, None]).sum(axis=0)
