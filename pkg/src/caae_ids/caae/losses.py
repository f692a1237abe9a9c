"""The four CAAE objectives with their gradients.

Each function returns the scalar loss together with the gradient(s) the
training loop needs: with respect to model outputs for the reconstruction,
generator and supervised losses, and accumulated into critic parameters for
the critic loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LabelError, NumericsError, ShapeError
from ..nn import Sequential, double_backward_mlp, input_gradient
from .model import CLASS_DIM, STYLE_DIM

GP_WEIGHT = 10.0
PROB_CLIP = 1e-7


@dataclass
class PriorSamples:
    y_prior: np.ndarray  # (N, 2) one-hot rows from a uniform Cat(2)
    z_prior: np.ndarray  # (N, 10) from N(0, I)
    epsilon: np.ndarray  # (N, 1) from U[0, 1]


def sample_priors(rng: np.random.Generator, n: int, dtype=np.float32) -> PriorSamples:
    y = np.eye(CLASS_DIM, dtype=dtype)[rng.integers(0, CLASS_DIM, size=n)]
    z = rng.standard_normal((n, STYLE_DIM)).astype(dtype)
    eps = rng.random((n, 1)).astype(dtype)
    return PriorSamples(y, z, eps)


def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericsError(f"{what} is not finite")
    return value


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> tuple[float, np.ndarray]:
    """``||X - X_hat||^2 / N``, summed over all elements; returns (loss, dL/dX_hat)."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"reconstruction shapes differ: {x.shape} vs {x_hat.shape}")
    n = x.shape[0]
    diff = x_hat - x
    loss = float(np.sum(diff * diff)) / n
    return _finite(loss, "reconstruction loss"), (2.0 / n) * diff


def supervised_loss(y_hat: np.ndarray, y_true: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax outputs against one-hot labels.

    Probabilities are clipped to ``[1e-7, 1 - 1e-7]`` before the log; the
    gradient is zero where clipping is active.

    Raises:
        LabelError: ``y_true`` rows are not one-hot.
    """
    if y_hat.shape != y_true.shape:
        raise ShapeError(f"prediction/label shapes differ: {y_hat.shape} vs {y_true.shape}")
    if not (np.isin(y_true, (0, 1)).all() and np.all(y_true.sum(axis=1) == 1)):
        raise LabelError("labels must be one-hot rows")
    n = y_hat.shape[0]
    clipped = np.clip(y_hat, PROB_CLIP, 1 - PROB_CLIP)
    loss = -float(np.sum(y_true * np.log(clipped))) / n
    inside = (y_hat >= PROB_CLIP) & (y_hat <= 1 - PROB_CLIP)
    grad = -(y_true / clipped) * inside / n
    return _finite(loss, "supervised loss"), grad.astype(y_hat.dtype, copy=False)


def one_hot(labels: np.ndarray, dtype=np.float32) -> np.ndarray:
    return np.eye(CLASS_DIM, dtype=dtype)[np.asarray(labels, dtype=np.int64)]


def critic_loss_with_gp(
    critic: Sequential,
    latent: np.ndarray,
    prior: np.ndarray,
    epsilon: np.ndarray,
    weight: float = GP_WEIGHT,
) -> tuple[float, dict[str, float]]:
    """WGAN critic loss ``E[D(latent)] - E[D(prior)] + weight * GP``.

    The gradient penalty is taken at ``epsilon * latent + (1 - epsilon) * prior``.
    ``latent`` is treated as a constant (the encoder is not updated here).
    Parameter gradients are accumulated into the critic's ``Param.grad``.

    Returns the loss and its parts ``{"wgan": ..., "gp": ...}`` (gp unweighted).
    """
    if latent.shape != prior.shape:
        raise ShapeError(f"latent/prior shapes differ: {latent.shape} vs {prior.shape}")
    n = latent.shape[0]
    eps = np.asarray(epsilon, dtype=latent.dtype).reshape(n, 1)

    d_fake = critic.forward(latent)
    critic.backward(np.full_like(d_fake, 1.0 / n))
    d_real = critic.forward(prior)
    critic.backward(np.full_like(d_real, -1.0 / n))
    wgan = float(d_fake.mean() - d_real.mean())

    mixed = eps * latent + (1 - eps) * prior
    if weight:
        gp = double_backward_mlp(critic, mixed, weight) / weight
    else:
        norms = np.linalg.norm(input_gradient(critic, mixed), axis=1)
        gp = float(np.mean((norms - 1.0) ** 2))
    loss = _finite(wgan + weight * gp, "critic loss")
    return loss, {"wgan": wgan, "gp": gp}


def generator_loss(
    d_cat: Sequential, d_gaus: Sequential, y_hat: np.ndarray, z_hat: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """``-E[D_cat(y_hat)] - E[D_gaus(z_hat)]`` and its gradients w.r.t. the latents.

    Critic parameter gradients are left exactly as they were.
    """
    grads = {}
    parts = []
    for name, critic, latent in (("cat", d_cat, y_hat), ("gaus", d_gaus, z_hat)):
        saved = [p.grad.copy() for p in critic.params()]
        d = critic.forward(latent)
        n = latent.shape[0]
        grads[name] = critic.backward(np.full_like(d, -1.0 / n))
        for p, g in zip(critic.params(), saved):
            p.grad = g
        parts.append(float(d.mean()))
    loss = _finite(-parts[0] - parts[1], "generator loss")
    return loss, grads["cat"], grads["gaus"]
