"""Differentiable layers with explicit forward/backward passes.

Every layer implements ``forward(x, cache)`` and ``backward(dout, cache)``;
the cache dict carries whatever the backward pass needs, so one layer
instance can be applied to several inputs (e.g. every frame of a clip)
before any backward runs.  ``backward`` accumulates parameter gradients
into the layer's gradient buffers and returns the input gradient.

A model instance is exclusively owned while forward/backward runs (the
gradient buffers are mutable); distinct instances are independent.
"""

from __future__ import annotations

import numpy as np

from ..convops import depthwise_nd, pad_spatial
from ..errors import ShapeError


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    # exp(-|x|) never overflows; recombine by sign.
    e = np.exp(-np.abs(x))
    return np.where(np.asarray(x) >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Layer:
    """Base layer: no parameters, identity-like contract."""

    kind = "layer"

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def zero_grads(self) -> None:
        for g in self.grads():
            g[...] = 0.0

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward(self, x: np.ndarray, cache: dict) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray, cache: dict) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    """Affine map: y = x @ W + b for a 1D input vector."""

    kind = "dense"

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None,
                 bias_init: float = 0.0):
        rng = rng or np.random.default_rng(0)
        self.w = glorot_uniform(rng, d_in, d_out, (d_in, d_out))
        self.b = np.full(d_out, bias_init, dtype=np.float64)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.w.shape[0]:
            raise ShapeError(
                f"dense expects input of shape ({self.w.shape[0]},), got {x.shape}"
            )
        cache["x"] = x
        return x @ self.w + self.b

    def backward(self, dout, cache):
        x = cache["x"]
        self.dw += np.outer(x, dout)
        self.db += dout
        return dout @ self.w.T


class Conv1d(Layer):
    """1D convolution over a (T, C_in) sequence with full channel mixing.

    Weight shape is (k, C_in, F).  "same" padding zero-fills the time axis
    (k odd); "valid" requires T >= k.
    """

    kind = "conv1d"

    def __init__(self, c_in: int, filters: int, kernel_size: int,
                 padding: str = "same", rng: np.random.Generator | None = None):
        if padding not in ("same", "valid"):
            raise ShapeError(f"unknown padding {padding!r}")
        if padding == "same" and kernel_size % 2 == 0:
            raise ShapeError("'same' padding requires an odd kernel size")
        rng = rng or np.random.default_rng(0)
        self.padding = padding
        self.k = kernel_size
        self.w = glorot_uniform(
            rng, kernel_size * c_in, kernel_size * filters,
            (kernel_size, c_in, filters),
        )
        self.b = np.zeros(filters, dtype=np.float64)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.w.shape[1]:
            raise ShapeError(
                f"conv1d expects (T, {self.w.shape[1]}) input, got {x.shape}"
            )
        t = x.shape[0]
        if self.padding == "same":
            pad = self.k // 2
            xp = np.pad(x, ((pad, pad), (0, 0)))
            t_out = t
        else:
            if t < self.k:
                raise ShapeError(f"sequence length {t} shorter than kernel {self.k}")
            xp = x
            t_out = t - self.k + 1
        out = np.tile(self.b, (t_out, 1))
        for i in range(self.k):
            out += xp[i : i + t_out] @ self.w[i]
        cache["xp"] = xp
        cache["t_in"] = t
        cache["t_out"] = t_out
        return out

    def backward(self, dout, cache):
        xp, t_out = cache["xp"], cache["t_out"]
        dxp = np.zeros_like(xp)
        for i in range(self.k):
            self.dw[i] += xp[i : i + t_out].T @ dout
            dxp[i : i + t_out] += dout @ self.w[i].T
        self.db += dout.sum(axis=0)
        if self.padding == "same":
            pad = self.k // 2
            return dxp[pad : pad + cache["t_in"]]
        return dxp


class Swish(Layer):
    """Elementwise x * sigmoid(x)."""

    kind = "swish"

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        s = sigmoid(x)
        cache["x"], cache["s"] = x, s
        return x * s

    def backward(self, dout, cache):
        x, s = cache["x"], cache["s"]
        return dout * (s + x * s * (1.0 - s))


def swish(x):
    """Swish activation of a scalar or array."""
    x = np.asarray(x, dtype=np.float64)
    return x * sigmoid(x)


def swish_derivative(x):
    x = np.asarray(x, dtype=np.float64)
    s = sigmoid(x)
    return s + x * s * (1.0 - s)


class GlobalMaxPool1d(Layer):
    """Per-feature maximum over the time axis of a (T, F) sequence.

    Backward routes the gradient to the argmax rows only, first occurrence
    on ties, so gradient mass is conserved and deterministic.
    """

    kind = "global_max_pool"

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ShapeError(f"global max pool expects nonempty (T, F), got {x.shape}")
        idx = np.argmax(x, axis=0)
        cache["idx"] = idx
        cache["shape"] = x.shape
        return x[idx, np.arange(x.shape[1])]

    def backward(self, dout, cache):
        dx = np.zeros(cache["shape"])
        dx[cache["idx"], np.arange(cache["shape"][1])] = dout
        return dx


class DepthwiseSeparable2d(Layer):
    """Per-channel spatial convolution followed by a 1x1 channel mix.

    Operates on (..., H, W, C_in) with "same" padding; leading axes are
    batch dims (e.g. the frames of a clip).  Bias is applied after the
    pointwise stage.
    """

    kind = "depthwise_separable2d"

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 3,
                 rng: np.random.Generator | None = None):
        if kernel_size % 2 == 0:
            raise ShapeError("'same' padding requires an odd kernel size")
        rng = rng or np.random.default_rng(0)
        k2 = kernel_size * kernel_size
        self.depthwise = glorot_uniform(rng, k2, k2, (c_in, kernel_size, kernel_size))
        self.pointwise = glorot_uniform(rng, c_in, c_out, (c_in, c_out))
        self.b = np.zeros(c_out, dtype=np.float64)
        self.d_depthwise = np.zeros_like(self.depthwise)
        self.d_pointwise = np.zeros_like(self.pointwise)
        self.db = np.zeros_like(self.b)

    def params(self):
        return [self.depthwise, self.pointwise, self.b]

    def grads(self):
        return [self.d_depthwise, self.d_pointwise, self.db]

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 3 or x.shape[-1] != self.depthwise.shape[0]:
            raise ShapeError(
                f"expected (..., H, W, {self.depthwise.shape[0]}) input, got {x.shape}"
            )
        mid = depthwise_nd(x, self.depthwise, padding="same")
        k = self.depthwise.shape[1]
        cache["xp"] = pad_spatial(x, k // 2, k // 2)
        cache["mid"] = mid
        return mid @ self.pointwise + self.b

    def backward(self, dout, cache):
        xp, mid = cache["xp"], cache["mid"]
        h, w, c_in = mid.shape[-3], mid.shape[-2], mid.shape[-1]
        self.db += dout.reshape(-1, dout.shape[-1]).sum(axis=0)
        self.d_pointwise += mid.reshape(-1, c_in).T @ dout.reshape(-1, dout.shape[-1])
        dmid = dout @ self.pointwise.T
        k = self.depthwise.shape[1]
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                window = xp[..., i : i + h, j : j + w, :]
                self.d_depthwise[:, i, j] += np.einsum(
                    "...c,...c->c", window, dmid, optimize=True
                )
                dxp[..., i : i + h, j : j + w, :] += dmid * self.depthwise[:, i, j]
        pad = k // 2
        return dxp[..., pad : pad + h, pad : pad + w, :]


class MaxPool2d(Layer):
    """2x2 max pooling on the spatial axes of (..., H, W, C).

    Odd trailing rows/cols are dropped; ties route the gradient to the
    first position in row-major window order.
    """

    kind = "max_pool2d"

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        h, w, c = x.shape[-3], x.shape[-2], x.shape[-1]
        h2, w2 = h // 2, w // 2
        lead = x.shape[:-3]
        flat = (
            x[..., : h2 * 2, : w2 * 2, :]
            .reshape(-1, h2, 2, w2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(-1, h2, w2, 4, c)
        )
        idx = np.argmax(flat, axis=3)
        cache["idx"] = idx
        cache["shape"] = x.shape
        out = np.take_along_axis(flat, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return out.reshape(*lead, h2, w2, c)

    def backward(self, dout, cache):
        shape = cache["shape"]
        h, w, c = shape[-3], shape[-2], shape[-1]
        h2, w2 = h // 2, w // 2
        idx = cache["idx"]
        dflat = np.zeros((idx.shape[0], h2, w2, 4, c))
        np.put_along_axis(
            dflat, idx[:, :, :, None, :], dout.reshape(-1, h2, w2, 1, c), axis=3
        )
        dx = np.zeros((idx.shape[0], h, w, c))
        dx[:, : h2 * 2, : w2 * 2, :] = (
            dflat.reshape(-1, h2, w2, 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(-1, h2 * 2, w2 * 2, c)
        )
        return dx.reshape(shape)


class GlobalAvgPool2d(Layer):
    """Spatial mean of an (..., H, W, C) map, one value per channel."""

    kind = "global_avg_pool2d"

    def forward(self, x, cache):
        x = np.asarray(x, dtype=np.float64)
        cache["shape"] = x.shape
        return x.mean(axis=(-3, -2))

    def backward(self, dout, cache):
        shape = cache["shape"]
        h, w = shape[-3], shape[-2]
        return np.broadcast_to(
            dout[..., None, None, :] / (h * w), shape
        ).copy()


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, cache):
        cache["shape"] = x.shape
        return np.asarray(x, dtype=np.float64).ravel()

    def backward(self, dout, cache):
        return dout.reshape(cache["shape"])


class FrameEncoder(Layer):
    """Apply a layer stack independently to every frame of a clip.

    Input (nx, ny, T) -> output (T, D): the clip is rearranged to
    (T, nx, ny, 1) and pushed through the stack in one batched pass; the
    stack's layers must treat leading axes as batch dims.  No temporal
    mixing happens here.
    """

    kind = "frame_encoder"

    def __init__(self, stack: list[Layer]):
        self.stack = stack

    def params(self):
        return [p for layer in self.stack for p in layer.params()]

    def grads(self):
        return [g for layer in self.stack for g in layer.grads()]

    def forward(self, clip, cache):
        clip = np.asarray(clip, dtype=np.float64)
        if clip.ndim != 3:
            raise ShapeError(f"clip must be (nx, ny, T), got shape {clip.shape}")
        x = np.moveaxis(clip, 2, 0)[..., None]  # (T, nx, ny, 1)
        layer_caches = []
        for layer in self.stack:
            c: dict = {}
            x = layer.forward(x, c)
            layer_caches.append(c)
        cache["layers"] = layer_caches
        return x

    def backward(self, dout, cache):
        d = dout
        for layer, c in zip(reversed(self.stack), reversed(cache["layers"])):
            d = layer.backward(d, c)
        return np.moveaxis(d[..., 0], 0, 2)


class ModelGraph:
    """An ordered sequence of layers trained as one unit."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers
        self._caches: list[dict] | None = None

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        caches = []
        for layer in self.layers:
            cache: dict = {}
            x = layer.forward(x, cache)
            caches.append(cache)
        self._caches = caches
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._caches is None:
            raise RuntimeError("backward called before forward")
        for layer, cache in zip(reversed(self.layers), reversed(self._caches)):
            dout = layer.backward(dout, cache)
        return dout

    def kinds(self) -> list[str]:
        return [layer.kind for layer in self.layers]

    def get_params_flat(self) -> np.ndarray:
        params = self.params()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in params])

    def set_params_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params():
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ShapeError(f"flat vector has {flat.size} elements, model needs {offset}")


def count_params(model: ModelGraph | Layer) -> int:
    """Total number of parameter elements in a model or a single layer."""
    if isinstance(model, Layer):
        return model.n_params()
    return sum(p.size for p in model.params())
