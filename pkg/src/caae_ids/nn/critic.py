"""MLP critics and the gradient-penalty double backward.

A critic is ``[Dense, ReLU] * L + Dense(., 1)`` optionally followed by a
sigmoid. The gradient penalty needs the derivative of ``||dD/dx||`` with
respect to the critic parameters. For this fixed topology the input gradient
is the product

    dD/dx = s(o) * W_1 diag(m_1) W_2 ... diag(m_L) w_out

with ``m_l`` the ReLU masks and ``s = D(1 - D)`` for a sigmoid output (1 for
a linear one). ReLU masks are piecewise constant, so the penalty gradient
flows through the weight matrices in this product and, for a sigmoid output,
through ``s(o)`` back into the ordinary forward pass.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..errors import NumericsError, TopologyError
from .layers import Dense, ReLU, Sequential, Sigmoid


def make_critic(
    in_dim: int,
    hidden: Sequence[int] = (1000, 1000),
    rng: np.random.Generator | None = None,
    output: str = "sigmoid",
    name: str = "critic",
    dtype=np.float32,
) -> Sequential:
    """Build a critic MLP; ``output`` is ``"sigmoid"`` or ``"linear"``."""
    rng = np.random.default_rng() if rng is None else rng
    layers = []
    dims = [in_dim, *hidden]
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        layers += [Dense(a, b, rng, f"{name}.fc{i + 1}", dtype), ReLU()]
    layers.append(Dense(dims[-1], 1, rng, f"{name}.out", dtype))
    if output == "sigmoid":
        layers.append(Sigmoid())
    elif output != "linear":
        raise TopologyError(f"unknown critic output {output!r}")
    return Sequential(*layers)


def _split_topology(net: Sequential) -> tuple[list[Dense], Dense, bool]:
    layers = list(net.layers)
    has_sigmoid = bool(layers) and isinstance(layers[-1], Sigmoid)
    if has_sigmoid:
        layers = layers[:-1]
    if not layers or not isinstance(layers[-1], Dense) or layers[-1].weight.shape[1] != 1:
        raise TopologyError("critic must end in a single-unit Dense layer (optionally + Sigmoid)")
    out = layers[-1]
    body = layers[:-1]
    if len(body) % 2:
        raise TopologyError("critic hidden part must be [Dense, ReLU] pairs")
    hidden = []
    for dense, act in zip(body[::2], body[1::2]):
        if not isinstance(dense, Dense) or not isinstance(act, ReLU):
            raise TopologyError(
                f"unsupported critic layer pair {type(dense).__name__}/{type(act).__name__}"
            )
        hidden.append(dense)
    return hidden, out, has_sigmoid


def _forward_cache(net, hidden, out, has_sigmoid, x):
    d = net.forward(x)
    masks = [act._mask for act in net.layers[1:2 * len(hidden):2]]
    slope = d * (1.0 - d) if has_sigmoid else np.ones_like(d)
    return d, masks, slope


def input_gradient(net: Sequential, x: np.ndarray) -> np.ndarray:
    """Per-sample gradient ``dD(x_n)/dx_n``, shape ``(N, in_dim)``. No side effects on grads."""
    hidden, out, has_sigmoid = _split_topology(net)
    _, masks, slope = _forward_cache(net, hidden, out, has_sigmoid, x)
    e = slope * out.weight.value[:, 0]
    for dense, mask in zip(reversed(hidden), reversed(masks)):
        e = (e * mask) @ dense.weight.value.T
    return e


def double_backward_mlp(net: Sequential, x: np.ndarray, weight: float = 1.0) -> float:
    """Gradient penalty ``weight * mean_n (||dD/dx(x_n)|| - 1)**2``.

    Returns the penalty value and *accumulates* its exact parameter gradient
    into the critic's ``Param.grad`` buffers.

    Raises:
        TopologyError: ``net`` is not a ReLU MLP with a scalar output.
        NumericsError: the penalty is not finite.
    """
    hidden, out, has_sigmoid = _split_topology(net)
    d, masks, slope = _forward_cache(net, hidden, out, has_sigmoid, x)
    n = x.shape[0]
    w_out = out.weight.value[:, 0]

    # input-gradient pass, keeping the masked deltas
    deltas = []
    e = slope * w_out
    for dense, mask in zip(reversed(hidden), reversed(masks)):
        delta = e * mask
        deltas.append(delta)
        e = delta @ dense.weight.value.T
    deltas.reverse()
    g = e
    norm = np.sqrt((g * g).sum(axis=1, keepdims=True))
    penalty = weight * float(np.mean((norm - 1.0) ** 2))
    if not np.isfinite(penalty):
        raise NumericsError("gradient penalty is not finite")

    safe = np.where(norm > 0, norm, 1.0)
    e_bar = np.where(norm > 0, (2.0 * weight / n) * (norm - 1.0) * g / safe, 0.0)
    for l, dense in enumerate(hidden):
        dense.weight.grad += e_bar.T @ deltas[l]
        e_bar = (e_bar @ dense.weight.value) * masks[l]
    # e_bar is now the adjoint of slope * w_out
    out.weight.grad[:, 0] += (e_bar * slope).sum(axis=0)
    if has_sigmoid:
        slope_bar = e_bar @ w_out[:, None]
        o_bar = slope_bar * d * (1.0 - d) * (1.0 - 2.0 * d)
        # reuse the ordinary backward pass from the pre-sigmoid output
        grad = o_bar
        for layer in reversed(net.layers[:-1]):
            grad = layer.backward(grad)
    return penalty
