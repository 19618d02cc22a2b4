"""Finite-difference verification of layer and model gradients.

Layer checks project the output onto a fixed random vector, so the scalar
"loss" L(x) = r . f(x) exercises every output element; analytic gradients
from one backward pass are compared against central differences over every
parameter and input element.  Relative error follows gradient_rel_error:
worst elementwise discrepancy per tensor, normalized by the larger
gradient magnitude.

Full models are too large for exhaustive differencing, so end-to-end
checks difference a seeded random subset of parameter elements and
compare against the matching reverse-mode entries.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    Conv1d,
    Dense,
    DepthwiseSeparable2d,
    GlobalMaxPool1d,
    Layer,
    ModelGraph,
    Swish,
)
from .train import gradient_rel_error, value_and_grad

DEFAULT_EPSILON = 1e-5


def layer_gradients(layer: Layer, x: np.ndarray, r: np.ndarray):
    """Analytic input and parameter gradients of L = sum(r * layer(x))."""
    layer.zero_grads()
    cache: dict = {}
    layer.forward(x, cache)
    dx = layer.backward(r, cache)
    return dx, [g.copy() for g in layer.grads()]


def fd_layer_gradients(layer: Layer, x: np.ndarray, r: np.ndarray,
                       epsilon: float = DEFAULT_EPSILON):
    """Central-difference input and parameter gradients of the same loss."""

    def loss() -> float:
        return float(np.sum(r * layer.forward(x, {})))

    def diff_array(a: np.ndarray) -> np.ndarray:
        g = np.zeros_like(a)
        flat_a, flat_g = a.ravel(), g.ravel()
        for i in range(flat_a.size):
            orig = flat_a[i]
            flat_a[i] = orig + epsilon
            plus = loss()
            flat_a[i] = orig - epsilon
            minus = loss()
            flat_a[i] = orig
            flat_g[i] = (plus - minus) / (2.0 * epsilon)
        return g

    dx = diff_array(x)
    dparams = [diff_array(p) for p in layer.params()]
    return dx, dparams


def check_layer(layer: Layer, x: np.ndarray, r: np.ndarray,
                epsilon: float = DEFAULT_EPSILON) -> float:
    """Worst relative error between analytic and numeric gradients."""
    dx, dparams = layer_gradients(layer, x, r)
    fd_dx, fd_dparams = fd_layer_gradients(layer, x, r, epsilon)
    return gradient_rel_error([dx] + dparams, [fd_dx] + fd_dparams)


def _standard_instances(kind: str, rng: np.random.Generator):
    """One random small instance of a layer kind with its input and projection."""
    if kind == "conv1d":
        t, c, f, k = 6, 3, 4, 3
        layer = Conv1d(c, f, k, padding=rng.choice(["same", "valid"]), rng=rng)
        x = rng.standard_normal((t, c))
        t_out = t if layer.padding == "same" else t - k + 1
        r = rng.standard_normal((t_out, f))
    elif kind == "dense":
        d, h = 5, 4
        layer = Dense(d, h, rng=rng)
        x = rng.standard_normal(d)
        r = rng.standard_normal(h)
    elif kind == "swish":
        layer = Swish()
        x = rng.standard_normal((4, 3))
        r = rng.standard_normal((4, 3))
    elif kind == "global_max_pool":
        layer = GlobalMaxPool1d()
        x = rng.standard_normal((6, 4))
        r = rng.standard_normal(4)
    elif kind == "depthwise_separable2d":
        c_in, c_out = 2, 3
        layer = DepthwiseSeparable2d(c_in, c_out, 3, rng=rng)
        x = rng.standard_normal((5, 6, c_in))
        r = rng.standard_normal((5, 6, c_out))
    else:
        raise ValueError(f"unknown layer kind {kind!r}")
    return layer, x, r


LAYER_KINDS = ("conv1d", "dense", "swish", "global_max_pool", "depthwise_separable2d")


def check_layer_kind(kind: str, n_instances: int = 20, seed: int = 42,
                     epsilon: float = DEFAULT_EPSILON) -> float:
    """Worst relative error over seeded random instances of one layer kind."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        layer, x, r = _standard_instances(kind, rng)
        worst = max(worst, check_layer(layer, x, r, epsilon))
    return worst


def check_model_subset(graph: ModelGraph, batch, loss, n_indices: int = 64,
                       seed: int = 42, epsilon: float = DEFAULT_EPSILON) -> float:
    """Compare reverse-mode and FD gradients on a random parameter subset."""
    _, grads = value_and_grad(graph, batch, loss)
    analytic_flat = np.concatenate([g.ravel() for g in grads])

    if isinstance(loss, str):
        from .train import LOSSES

        loss = LOSSES[loss]

    def batch_loss() -> float:
        return sum(loss(graph.forward(x), t)[0] for x, t in batch) / len(batch)

    params = graph.params()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_indices, total), replace=False)

    analytic = np.zeros(picks.size)
    numeric = np.zeros(picks.size)
    bounds = np.cumsum([0] + sizes)
    for j, flat_index in enumerate(sorted(int(i) for i in picks)):
        tensor = int(np.searchsorted(bounds, flat_index, side="right") - 1)
        local = flat_index - bounds[tensor]
        flat_p = params[tensor].ravel()
        orig = flat_p[local]
        flat_p[local] = orig + epsilon
        plus = batch_loss()
        flat_p[local] = orig - epsilon
        minus = batch_loss()
        flat_p[local] = orig
        numeric[j] = (plus - minus) / (2.0 * epsilon)
        analytic[j] = analytic_flat[flat_index]
    return gradient_rel_error([analytic], [numeric])
