"""Layers with hand-written reverse-mode gradients.

Arrays are float64 and batch-first: dense inputs are ``(B, F)``, convolutional
inputs are ``(B, C, L)``. Every layer caches what it needs during ``forward``;
``backward`` is a pure function of that cache, so it may be called more than
once per forward pass (the CCAE update relies on this for the HI head).
``backward`` overwrites ``grads`` rather than accumulating.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, StateError


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: parameters, their gradients and non-trainable buffers."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _require_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def describe(self) -> str:
        return type(self).__name__


def conv_output_length(length: int, kernel: int, stride: int, pad: int) -> int:
    return (length + 2 * pad - kernel) // stride + 1


class Conv1d(Layer):
    """1-D convolution (cross-correlation) with symmetric zero padding.

    Weights have shape ``(C_out, C_in, K)``.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 2,
                 pad: int = 1, rng: np.random.Generator | None = None, init: str = "he") -> None:
        super().__init__()
        if stride < 1 or kernel < 1:
            raise ConfigError("kernel and stride must be >= 1")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.pad = kernel, stride, pad
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel
        shape = (out_channels, in_channels, kernel)
        if init == "he":
            w = he_uniform(rng, shape, fan_in)
        else:
            w = xavier_uniform(rng, shape, fan_in, out_channels * kernel)
        self.params = {"weight": w, "bias": np.zeros(out_channels)}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ConfigError(f"Conv1d expects (B, {self.in_channels}, L), got {x.shape}")
        B, C, L = x.shape
        if L + 2 * self.pad < self.kernel:
            raise ConfigError(f"input length {L} too short for kernel {self.kernel}")
        K, s, p = self.kernel, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        L_out = conv_output_length(L, K, s, p)
        win = sliding_window_view(xp, K, axis=2)[:, :, ::s][:, :, :L_out]
        cols = win.transpose(0, 2, 1, 3).reshape(B * L_out, C * K)
        wm = self.params["weight"].reshape(self.out_channels, C * K)
        y = (cols @ wm.T).reshape(B, L_out, self.out_channels).transpose(0, 2, 1)
        self._cache = (cols, x.shape, L_out)
        return y + self.params["bias"][None, :, None]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        cols, (B, C, L), L_out = self._require_cache()
        K, s, p = self.kernel, self.stride, self.pad
        gm = grad.transpose(0, 2, 1).reshape(B * L_out, self.out_channels)
        wm = self.params["weight"].reshape(self.out_channels, C * K)
        self.grads = {
            "weight": (gm.T @ cols).reshape(self.params["weight"].shape),
            "bias": grad.sum(axis=(0, 2)),
        }
        dcols = (gm @ wm).reshape(B, L_out, C, K)
        dxp = np.zeros((B, C, L + 2 * p))
        span = s * (L_out - 1) + 1
        for k in range(K):
            dxp[:, :, k:k + span:s] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dxp[:, :, p:p + L]

    def describe(self) -> str:
        return f"Conv1d({self.in_channels}->{self.out_channels}, k={self.kernel}, s={self.stride}, p={self.pad})"


class ConvTranspose1d(Layer):
    """Transposed 1-D convolution, the adjoint of :class:`Conv1d`.

    Weights have shape ``(C_in, C_out, K)``. Output length is
    ``(L - 1) * stride - 2 * pad + K + output_padding``; the default
    ``output_padding = stride - 1`` makes a k=3, p=1 layer map L to ``stride * L``.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 2,
                 pad: int = 1, output_padding: int | None = None,
                 rng: np.random.Generator | None = None, init: str = "he") -> None:
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.output_padding = stride - 1 if output_padding is None else output_padding
        if self.output_padding > pad:
            raise ConfigError("output_padding must not exceed pad")
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel
        shape = (in_channels, out_channels, kernel)
        if init == "he":
            w = he_uniform(rng, shape, fan_in)
        else:
            w = xavier_uniform(rng, shape, fan_in, out_channels * kernel)
        self.params = {"weight": w, "bias": np.zeros(out_channels)}

    def output_length(self, length: int) -> int:
        return (length - 1) * self.stride - 2 * self.pad + self.kernel + self.output_padding

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ConfigError(f"ConvTranspose1d expects (B, {self.in_channels}, L), got {x.shape}")
        B, C, L = x.shape
        K, s, p = self.kernel, self.stride, self.pad
        L_full = (L - 1) * s + K
        L_out = self.output_length(L)
        xm = x.transpose(0, 2, 1).reshape(B * L, C)
        contrib = (xm @ self.params["weight"].reshape(C, -1)).reshape(B, L, self.out_channels, K)
        y_full = np.zeros((B, self.out_channels, L_full + self.output_padding))
        span = s * (L - 1) + 1
        for k in range(K):
            y_full[:, :, k:k + span:s] += contrib[:, :, :, k].transpose(0, 2, 1)
        self._cache = (xm, x.shape, L_full, L_out)
        return y_full[:, :, p:p + L_out] + self.params["bias"][None, :, None]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        xm, (B, C, L), L_full, L_out = self._require_cache()
        K, s, p = self.kernel, self.stride, self.pad
        g_full = np.zeros((B, self.out_channels, L_full + self.output_padding))
        g_full[:, :, p:p + L_out] = grad
        win = sliding_window_view(g_full, K, axis=2)[:, :, ::s][:, :, :L]
        gk = win.transpose(0, 2, 1, 3).reshape(B * L, self.out_channels * K)
        wm = self.params["weight"].reshape(C, -1)
        self.grads = {
            "weight": (xm.T @ gk).reshape(self.params["weight"].shape),
            "bias": grad.sum(axis=(0, 2)),
        }
        return (gk @ wm.T).reshape(B, L, C).transpose(0, 2, 1)

    def describe(self) -> str:
        return (f"ConvTranspose1d({self.in_channels}->{self.out_channels}, k={self.kernel}, "
                f"s={self.stride}, p={self.pad}, op={self.output_padding})")


class Dense(Layer):
    """Affine map ``y = W x + b`` with ``W`` of shape ``(out, in)``."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None,
                 init: str = "xavier") -> None:
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        shape = (out_features, in_features)
        if init == "he":
            w = he_uniform(rng, shape, in_features)
        else:
            w = xavier_uniform(rng, shape, in_features, out_features)
        self.params = {"weight": w, "bias": np.zeros(out_features)}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigError(f"Dense expects (B, {self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._require_cache()
        self.grads = {"weight": grad.T @ x, "bias": grad.sum(axis=0)}
        return grad @ self.params["weight"]

    def describe(self) -> str:
        return f"Dense({self.in_features}->{self.out_features})"


class BatchNorm1d(Layer):
    """Batch normalization over the batch (and length) axes, per feature/channel.

    Training mode normalizes with the biased batch variance and updates the
    running statistics with ``running = (1 - momentum) * running + momentum * batch``
    (the running variance uses the unbiased estimate). Eval mode uses the
    running statistics.
    """

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1) -> None:
        super().__init__()
        self.num_features, self.eps, self.momentum = num_features, eps, momentum
        self.params = {"gamma": np.ones(num_features), "beta": np.zeros(num_features)}
        self.buffers = {"running_mean": np.zeros(num_features), "running_var": np.ones(num_features)}

    def _shape(self, x: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if x.ndim == 2:
            return (0,), (1, -1)
        if x.ndim == 3:
            return (0, 2), (1, -1, 1)
        raise ConfigError(f"BatchNorm1d expects 2-D or 3-D input, got {x.shape}")

    @staticmethod
    def _csum(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        # per-channel sum (of a * b) over every axis except 1
        sub = "bc" if a.ndim == 2 else "bcl"
        if b is None:
            return np.einsum(f"{sub}->c", a)
        return np.einsum(f"{sub},{sub}->c", a, b)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] != self.num_features:
            raise ConfigError(f"BatchNorm1d expects {self.num_features} features, got {x.shape[1]}")
        _, bshape = self._shape(x)
        gamma, beta = self.params["gamma"], self.params["beta"]
        if train:
            if x.shape[0] < 2:
                raise ConfigError("BatchNorm1d needs a batch of at least 2 samples in training mode")
            n = x.size // self.num_features
            mean = self._csum(x) / n
            xc = x - mean.reshape(bshape)
            var = self._csum(xc, xc) / n
            inv_std = 1.0 / np.sqrt(var + self.eps)
            m = self.momentum
            self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
            self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * var * n / (n - 1)
            self._cache = ("train", xc, inv_std, bshape)
            out = xc * (gamma * inv_std).reshape(bshape)
        else:
            inv_std = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
            xc = x - self.buffers["running_mean"].reshape(bshape)
            self._cache = ("eval", xc, inv_std, bshape)
            out = xc * (gamma * inv_std).reshape(bshape)
        out += beta.reshape(bshape)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        mode, xc, inv_std, bshape = self._require_cache()
        gamma = self.params["gamma"]
        g_beta = self._csum(grad)
        g_gamma = self._csum(grad, xc) * inv_std
        self.grads = {"gamma": g_gamma, "beta": g_beta}
        k1 = gamma * inv_std
        if mode == "eval":
            return grad * k1.reshape(bshape)
        n = grad.size // self.num_features
        # dx = k1 * (g - mean(g) - xhat * mean(g * xhat)), folded into per-channel coefficients
        dx = grad * k1.reshape(bshape)
        dx += xc * (-k1 * inv_std * g_gamma / n).reshape(bshape)
        dx += (-k1 * g_beta / n).reshape(bshape)
        return dx

    def describe(self) -> str:
        return f"BatchNorm1d({self.num_features})"


class ReLU(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self._require_cache()


class Flatten(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._require_cache())


class Reshape(Layer):
    def __init__(self, shape: tuple[int, ...]) -> None:
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._require_cache())

    def describe(self) -> str:
        return f"Reshape{self.shape}"


class Sequential(Layer):
    """Ordered stack of layers; parameter names are ``"<index>.<param>"``."""

    def __init__(self, layers: list[Layer]) -> None:
        super().__init__()
        self.layers = list(layers)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        self._cache = True
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self._require_cache()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", value

    def named_grads(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                g = layer.grads.get(name)
                yield f"{i}.{name}", (np.zeros_like(layer.params[name]) if g is None else g)

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, value in layer.buffers.items():
                yield f"{i}.{name}", value

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        idx, key = name.split(".", 1)
        layer = self.layers[int(idx)]
        target = layer.params if key in layer.params else layer.buffers
        if key not in target:
            raise ConfigError(f"unknown tensor {name!r}")
        if target[key].shape != value.shape:
            raise ConfigError(f"shape mismatch for {name}: {target[key].shape} vs {value.shape}")
        target[key] = np.array(value, dtype=np.float64)

    def parameter_count(self) -> int:
        return sum(v.size for _, v in self.named_parameters())

    def describe(self) -> str:
        return "\n".join(f"  [{i}] {layer.describe()}" for i, layer in enumerate(self.layers))
