"""Deep Sets aggregation network with a hand-written backward pass.

Inputs are per-voter feature matrices (n alternatives x 2 features). The
encoder is a stack of permutation-equivariant layers applied to each voter
independently; its outputs are combined across voters (sum or mean) and fed
to an equivariant decoder whose single output channel is softmaxed over
alternatives. Every equivariant layer computes ``(x - pool(x)) @ W + b`` with
``pool`` either max or mean taken feature-wise over the alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..simulation import COUNT_MAX, VoteSet

N_FEATURES = 2
POOLS = ("max", "mean")
VOTER_AGGS = ("sum", "mean")

# bound on chunk * m * n * width, keeps one activation block near 32 MB
CHUNK_ELEMENTS = 1 << 22


@dataclass
class DeepSetModel:
    hidden_width: int = 64
    encoder_layers: int = 4
    decoder_layers: int = 2
    pool: str = "max"
    voter_agg: str = "sum"
    params: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.encoder_layers < 1 or self.decoder_layers < 0 or self.hidden_width < 1:
            raise ValueError("need >= 1 encoder layer, >= 0 decoder layers, width >= 1")
        if self.pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}")
        if self.voter_agg not in VOTER_AGGS:
            raise ValueError(f"voter_agg must be one of {VOTER_AGGS}")
        if self.params:
            expected = self.param_shapes()
            got = [p.shape for p in self.params]
            if got != expected:
                raise ValueError(f"parameter shapes {got} do not match architecture {expected}")

    @property
    def n_layers(self) -> int:
        return self.encoder_layers + self.decoder_layers

    def widths(self) -> list[int]:
        """Channel widths at every layer boundary, input first."""
        return [N_FEATURES] + [self.hidden_width] * (self.n_layers - 1) + [1]

    def param_shapes(self) -> list[tuple[int, ...]]:
        w = self.widths()
        shapes: list[tuple[int, ...]] = []
        for a, b in zip(w[:-1], w[1:]):
            shapes += [(a, b), (b,)]
        return shapes

    def layer(self, idx: int) -> tuple[np.ndarray, np.ndarray]:
        return self.params[2 * idx], self.params[2 * idx + 1]

    def copy(self) -> DeepSetModel:
        return DeepSetModel(self.hidden_width, self.encoder_layers, self.decoder_layers,
                            self.pool, self.voter_agg, [p.copy() for p in self.params])

    @classmethod
    def initialize(cls, rng: np.random.Generator, **arch) -> DeepSetModel:
        model = cls(**arch)
        params = []
        for w_shape, b_shape in zip(*[iter(model.param_shapes())] * 2):
            bound = 1.0 / np.sqrt(w_shape[0])
            params.append(rng.uniform(-bound, bound, size=w_shape))
            params.append(rng.uniform(-bound, bound, size=b_shape))
        model.params = params
        return model

    @classmethod
    def zeros(cls, **arch) -> DeepSetModel:
        model = cls(**arch)
        model.params = [np.zeros(s) for s in model.param_shapes()]
        return model


def featurize(votes: VoteSet, counts) -> np.ndarray:
    """(m, n, 2) features: count / 50 and a rank score running from 1 (top) to 0 (bottom).

    Counts above 50 are not clipped.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != votes.rankings.shape:
        raise ValueError(f"counts shape {counts.shape} != votes shape {votes.rankings.shape}")
    n = votes.n
    if n < 2:
        raise ValueError("featurization needs at least two alternatives")
    z = np.empty(counts.shape + (N_FEATURES,))
    z[..., 0] = counts / COUNT_MAX
    z[..., 1] = 1.0 - votes.positions / (n - 1)
    return z


def featurize_arrays(positions: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Batched :func:`featurize` from rank positions, any leading shape (..., m, n)."""
    n = positions.shape[-1]
    z = np.empty(positions.shape + (N_FEATURES,))
    z[..., 0] = counts / COUNT_MAX
    z[..., 1] = 1.0 - positions / (n - 1)
    return z


def _order_free_sum(x: np.ndarray, axis: int) -> np.ndarray:
    """Sum whose rounding does not depend on the order of elements along ``axis``."""
    return np.sort(x, axis=axis).sum(axis=axis)


def _pool(x: np.ndarray, kind: str) -> np.ndarray:
    """Feature-wise pool over the alternatives axis (-2)."""
    if kind == "max":
        return x.max(axis=-2, keepdims=True)
    return _order_free_sum(x, -2)[..., None, :] / x.shape[-2]


def _pool_backward(du: np.ndarray, u: np.ndarray, kind: str) -> np.ndarray:
    total = du.sum(axis=-2, keepdims=True)
    if kind == "max":
        # u == 0 exactly where x attains its max; ties share the gradient evenly
        hit = u == 0.0
        share = hit.sum(axis=-2, keepdims=True)
        return du - hit * (total / share)
    return du - total / du.shape[-2]


def _layer_forward(model: DeepSetModel, l: int, x: np.ndarray, relu: bool, cache: list | None):
    W, b = model.layer(l)
    u = x - _pool(x, model.pool)
    if W.shape[1] == 1:
        # BLAS gemv rounding depends on row order; a per-row reduction does not
        y = (u * W[:, 0]).sum(axis=-1, keepdims=True)
    else:
        y = u @ W
    y += b
    if relu:
        np.maximum(y, 0.0, out=y)
    if cache is not None:
        cache.append((u, y if relu else None))
    return y


def _layer_backward(model: DeepSetModel, l: int, dy: np.ndarray, entry, grads: list,
                    need_dx: bool):
    W, _ = model.layer(l)
    u, y = entry
    if y is not None:
        dy = dy * (y > 0)
    flat_u = u.reshape(-1, u.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    grads[2 * l] += flat_u.T @ flat_dy
    grads[2 * l + 1] += flat_dy.sum(axis=0)
    if not need_dx:
        return None
    du = dy @ W.T
    return _pool_backward(du, u, model.pool)


def logits(model: DeepSetModel, z: np.ndarray, cache: list | None = None) -> np.ndarray:
    """Pre-softmax scores for a stacked batch ``z`` of shape (B, m, n, F) -> (B, n).

    Every reduction over voters or alternatives is order-free, so permuting
    either leaves the output bit-identical (up to the same permutation).
    """
    if z.shape[-1] != model.widths()[0]:
        raise ValueError(f"feature width {z.shape[-1]} != model input width {model.widths()[0]}")
    last = model.n_layers - 1
    h = z
    for l in range(model.encoder_layers):
        h = _layer_forward(model, l, h, relu=l != last, cache=cache)
    h = _order_free_sum(h, 1)
    if model.voter_agg == "mean":
        h = h / z.shape[1]
    for l in range(model.encoder_layers, model.n_layers):
        h = _layer_forward(model, l, h, relu=l != last, cache=cache)
    return h[..., 0]


def _softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / _order_free_sum(e, -1)[..., None]


def forward(model: DeepSetModel, z: np.ndarray) -> np.ndarray:
    """Distribution over alternatives for one (m, n, F) feature tensor, or a (B, m, n, F) stack."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 3:
        return _softmax(logits(model, z[None]))[0]
    return _softmax(logits(model, z))


def _chunk_size(model: DeepSetModel, m: int, n: int) -> int:
    per_example = max(1, m * n * max(model.hidden_width, N_FEATURES))
    return max(1, CHUNK_ELEMENTS // per_example)


def batch_loss_and_grad(model: DeepSetModel, z: np.ndarray, targets: np.ndarray,
                        weight: float | None = None, grads: list | None = None):
    """Summed cross-entropy of a same-shape stack, times ``weight`` (default 1/B).

    Gradients are accumulated into ``grads`` (allocated when None). Examples
    are processed in fixed-order chunks, so results are deterministic.
    """
    B = z.shape[0]
    targets = np.asarray(targets, dtype=np.int64)
    if weight is None:
        weight = 1.0 / B
    if grads is None:
        grads = [np.zeros_like(p) for p in model.params]
    m = z.shape[1]
    total = 0.0
    step = _chunk_size(model, m, z.shape[2])
    n_enc = model.encoder_layers
    for start in range(0, B, step):
        zc = z[start:start + step]
        tc = targets[start:start + step]
        cache: list = []
        a = logits(model, zc, cache)
        a_max = a.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(a - a_max).sum(axis=-1)) + a_max[:, 0]
        rows = np.arange(a.shape[0])
        total += float((lse - a[rows, tc]).sum())

        d = np.exp(a - lse[:, None])
        d[rows, tc] -= 1.0
        d = (d * weight)[..., None]
        for l in range(model.n_layers - 1, n_enc - 1, -1):
            d = _layer_backward(model, l, d, cache[l], grads, need_dx=True)
        # undo the voter aggregation: every voter receives the pooled gradient
        if model.voter_agg == "mean":
            d = d / m
        d = np.broadcast_to(d[:, None], (zc.shape[0], m) + d.shape[1:])
        for l in range(n_enc - 1, -1, -1):
            d = _layer_backward(model, l, d, cache[l], grads, need_dx=l > 0)
    return total * weight, grads


def loss_and_grad(model: DeepSetModel, batch):
    """Mean cross-entropy over ``batch`` (pairs of feature tensor, optimal index) and its gradient."""
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be nonempty")
    weight = 1.0 / len(batch)
    grads = [np.zeros_like(p) for p in model.params]
    groups: dict[tuple, list[int]] = {}
    for i, (z, _) in enumerate(batch):
        groups.setdefault(np.shape(z), []).append(i)
    loss = 0.0
    for shape in sorted(groups):
        idx = groups[shape]
        z = np.stack([np.asarray(batch[i][0], dtype=float) for i in idx])
        t = np.array([batch[i][1] for i in idx])
        part, _ = batch_loss_and_grad(model, z, t, weight=weight, grads=grads)
        loss += part
    return loss, grads


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def adam_step(model: DeepSetModel, grads: list, state: AdamState) -> tuple[DeepSetModel, AdamState]:
    """Bias-corrected Adam update; returns new objects and leaves inputs untouched."""
    if len(grads) != len(model.params) or any(g.shape != p.shape for g, p in zip(grads, model.params)):
        raise ValueError("gradient shapes do not match model parameters")
    m_prev = state.m if state.m is not None else [np.zeros_like(p) for p in model.params]
    v_prev = state.v if state.v is not None else [np.zeros_like(p) for p in model.params]
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(model.params, grads, m_prev, v_prev):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    out = DeepSetModel(model.hidden_width, model.encoder_layers, model.decoder_layers,
                       model.pool, model.voter_agg, new_p)
    return out, AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
