"""Layers with explicit forward/backward passes on numpy arrays.

Every layer caches what its backward pass needs during ``forward`` and
*accumulates* parameter gradients in ``backward``, so several losses can
contribute to one update before the optimizer steps. Image tensors are
``(N, C, H, W)``, dense tensors ``(N, D)``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Param:
    """A trainable tensor and its accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base class; parameter-free layers only override forward/backward."""

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    __call__ = forward


def _im2col(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """Padded ``(N, C, H+2, W+2)`` to ``(N*H*W, 9*C)`` patch rows, ordered (ky, kx, c)."""
    n, c = xp.shape[:2]
    xt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    cols = np.empty((n, h, w, 9, c), dtype=xp.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, 3 * i + j, :] = xt[:, i:i + h, j:j + w, :]
    return cols.reshape(n * h * w, 9 * c)


def _kernel_matrix(weight: np.ndarray) -> np.ndarray:
    """``(K, C, 3, 3)`` kernel as a ``(K, 9*C)`` matrix matching :func:`_im2col`."""
    k, c = weight.shape[:2]
    return weight.transpose(0, 2, 3, 1).reshape(k, 9 * c)


def conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None):
    """Same-padded stride-1 3x3 cross-correlation.

    Returns the output and the patch matrix (reused by the weight gradient).
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv3x3 expects NCHW input and KC33 kernel, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    k = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeError(f"kernel expects {weight.shape[1]} input channels, input has {c}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col(xp, h, w)
    out = cols @ _kernel_matrix(weight).T
    if bias is not None:
        out += bias
    return out.reshape(n, h, w, k).transpose(0, 3, 1, 2), cols


class Conv2d(Layer):
    """3x3 convolution, stride 1, zero "same" padding."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, name: str = "conv",
                 dtype=np.float32):
        fan_in = in_ch * 9
        self.weight = Param(f"{name}.weight", kaiming_uniform(rng, (out_ch, in_ch, 3, 3), fan_in, dtype))
        self.bias = Param(f"{name}.bias", np.zeros(out_ch, dtype=dtype))
        self._cols = None
        self._in_shape = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False):
        out, self._cols = conv3x3(x, self.weight.value, self.bias.value)
        self._in_shape = x.shape
        return out

    def backward(self, grad):
        n, c, h, w = self._in_shape
        k = self.weight.shape[0]
        if grad.shape != (n, k, h, w):
            raise ShapeError(f"conv backward expects grad {(n, k, h, w)}, got {grad.shape}")
        g = grad.transpose(0, 2, 3, 1).reshape(n * h * w, k)
        dw = (g.T @ self._cols).reshape(k, 3, 3, c)
        self.weight.grad += dw.transpose(0, 3, 1, 2)
        self.bias.grad += g.sum(axis=0)
        # input gradient is a correlation with the flipped, channel-swapped kernel
        flipped = self.weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx, _ = conv3x3(grad, np.ascontiguousarray(flipped))
        return dx


class MaxPool2x2(Layer):
    def __init__(self):
        self._argmax = None
        self._in_shape = None

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"max-pool needs even spatial extents, got {h}x{w}")
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
        self._argmax = blocks.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(blocks, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._in_shape
        blocks = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(blocks, self._argmax[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return blocks.reshape(n, c, h, w)


class Upsample2x2(Layer):
    """Nearest-neighbour upsampling by two in both spatial axes."""

    def forward(self, x, train=False):
        if x.ndim != 4:
            raise ShapeError(f"upsample expects NCHW input, got {x.shape}")
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h, w = grad.shape
        return grad.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class Dense(Layer):
    """Affine map ``x @ W + b`` with ``W`` of shape ``(in, out)``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str = "dense",
                 dtype=np.float32):
        self.weight = Param(f"{name}.weight", kaiming_uniform(rng, (in_dim, out_dim), in_dim, dtype))
        self.bias = Param(f"{name}.bias", np.zeros(out_dim, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeError(f"dense expects (N, {self.weight.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, grad):
        if grad.shape != (self._x.shape[0], self.weight.shape[1]):
            raise ShapeError(f"dense backward got grad of shape {grad.shape}")
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value.T

    def input_gradient(self, grad_out: np.ndarray | None = None) -> np.ndarray:
        """Gradient of ``sum(grad_out * output)`` w.r.t. the input, no side effects.

        With ``grad_out`` omitted (single output unit), this is ``W[:, 0]``
        broadcast over the batch.
        """
        if grad_out is None:
            if self.weight.shape[1] != 1:
                raise ShapeError("input_gradient without grad_out needs a single output unit")
            grad_out = np.ones((self._x.shape[0] if self._x is not None else 1, 1),
                               dtype=self.weight.value.dtype)
        return grad_out @ self.weight.value.T


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, train=False):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1.0 - self._y)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    """Softmax over the last axis."""

    def __init__(self):
        self._y = None

    def forward(self, x, train=False):
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` during training."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, shape: tuple[int, ...]):
        self.shape = tuple(shape)

    def forward(self, x, train=False):
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(grad.shape[0], -1)


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
