"""Finite-difference harnesses shared by the unit and acceptance suites.

Every check runs in float64 on random continuous inputs, which keeps ReLU
pre-activations and max-pool candidates away from their non-differentiable
points with overwhelming probability.
"""

from __future__ import annotations

import numpy as np

from caae_ids.caae import (
    CaaeModel,
    critic_loss_with_gp,
    generator_loss,
    one_hot,
    reconstruction_loss,
    sample_priors,
    supervised_loss,
)
from caae_ids.nn import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GradCheckReport,
    MaxPool2x2,
    Param,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Upsample2x2,
    grad_check,
    make_critic,
)

F64 = np.float64


def merge(reports):
    out = GradCheckReport(tolerance=reports[0].tolerance)
    for r in reports:
        out.checked += r.checked
        out.max_rel_error = max(out.max_rel_error, r.max_rel_error)
        out.failures += r.failures
    return out


def check_layer(layer, x, rng, tolerance=1e-4, max_entries=40, reset=None):
    """Check a layer's parameter and input gradients for ``sum(G * layer(x))``."""
    xp = Param("input", x.astype(F64))
    out = layer.forward(xp.value, train=True) if reset else layer.forward(xp.value)
    g = rng.standard_normal(out.shape)

    def loss():
        if reset:
            reset()
            return float(np.sum(g * layer.forward(xp.value, train=True)))
        return float(np.sum(g * layer.forward(xp.value)))

    for p in layer.params():
        p.zero_grad()
    if reset:
        reset()
        layer.forward(xp.value, train=True)
    else:
        layer.forward(xp.value)
    dx = layer.backward(g)
    params = layer.params()
    analytic = [p.grad.copy() for p in params] + [dx]
    return grad_check(loss, params + [xp], analytic, tolerance=tolerance,
                      max_entries=max_entries, rng=rng)


def _spread(rng, shape):
    # distinct values far from zero relative to the FD step
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2 + 0.5) * (2.0 / n)
    return vals.reshape(shape) + rng.uniform(-1e-3, 1e-3, size=shape)


def layer_cases(seed):
    """``(name, layer, input, reset)`` for every layer type of the engine."""
    rng = np.random.default_rng(seed)
    drop_seed = int(rng.integers(2**31))
    dropout = Dropout(0.3, np.random.default_rng(drop_seed))

    def reset_dropout():
        dropout.rng = np.random.default_rng(drop_seed)

    small_net = Sequential(
        Conv2d(1, 3, rng, "n.c1", F64), ReLU(), MaxPool2x2(), Flatten(),
        Dense(3 * 4 * 4, 5, rng, "n.d", F64), Sigmoid(),
    )
    return [
        ("conv2d", Conv2d(2, 3, rng, "c", F64), rng.standard_normal((2, 2, 6, 6)), None),
        ("dense", Dense(7, 4, rng, "d", F64), rng.standard_normal((3, 7)), None),
        ("maxpool", MaxPool2x2(), _spread(rng, (2, 2, 4, 6)), None),
        ("upsample", Upsample2x2(), rng.standard_normal((2, 3, 3, 2)), None),
        ("relu", ReLU(), _spread(rng, (4, 9)), None),
        ("sigmoid", Sigmoid(), 4 * rng.standard_normal((4, 6)), None),
        ("softmax", Softmax(), 3 * rng.standard_normal((5, 4)), None),
        ("dropout", dropout, rng.standard_normal((4, 10)), reset_dropout),
        ("flatten", Flatten(), rng.standard_normal((2, 3, 2, 2)), None),
        ("reshape", Reshape((2, 3)), rng.standard_normal((4, 6)), None),
        ("sequential", small_net, rng.standard_normal((2, 1, 8, 8)), None),
    ]


def check_all_layers(seed, tolerance=1e-4):
    rng = np.random.default_rng(seed + 10_000)
    return {name: check_layer(layer, x, rng, tolerance, reset=reset)
            for name, layer, x, reset in layer_cases(seed)}


# --- the four CAAE objectives -------------------------------------------

def check_reconstruction(seed, tolerance=1e-4):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(3, 29, 29)).astype(F64)
    xh = Param("x_hat", rng.uniform(0.05, 0.95, size=(3, 29, 29)))
    _, grad = reconstruction_loss(x, xh.value)
    return grad_check(lambda: reconstruction_loss(x, xh.value)[0], [xh], [grad],
                      tolerance=tolerance, max_entries=60, rng=rng)


def check_supervised(seed, tolerance=1e-4):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((6, 2))
    y = Param("y_hat", np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True))
    t = one_hot(rng.integers(0, 2, size=6), F64)
    _, grad = supervised_loss(y.value, t)
    return grad_check(lambda: supervised_loss(y.value, t)[0], [y], [grad],
                      tolerance=tolerance, rng=rng)


def check_critic_gp(seed, tolerance=1e-3, hidden=(12, 12), in_dim=2, output="sigmoid",
                    max_entries=30):
    """Critic WGAN-GP loss against critic parameters (double backward through the penalty)."""
    rng = np.random.default_rng(seed)
    critic = make_critic(in_dim, hidden, rng, output, "k", F64)
    latent = rng.standard_normal((5, in_dim))
    prior = rng.standard_normal((5, in_dim))
    eps = rng.random((5, 1))

    for p in critic.params():
        p.zero_grad()
    critic_loss_with_gp(critic, latent, prior, eps)
    analytic = [p.grad.copy() for p in critic.params()]
    return grad_check(lambda: critic_loss_with_gp(critic, latent, prior, eps)[0],
                      critic.params(), analytic, tolerance=tolerance,
                      max_entries=max_entries, rng=rng)


def check_generator(seed, tolerance=1e-4, hidden=(12, 12), output="sigmoid"):
    rng = np.random.default_rng(seed)
    d_cat = make_critic(2, hidden, rng, output, "c", F64)
    d_gaus = make_critic(10, hidden, rng, output, "g", F64)
    y = Param("y", rng.dirichlet((1, 1), size=4))
    z = Param("z", rng.standard_normal((4, 10)))
    _, gy, gz = generator_loss(d_cat, d_gaus, y.value, z.value)
    return grad_check(lambda: generator_loss(d_cat, d_gaus, y.value, z.value)[0],
                      [y, z], [gy, gz], tolerance=tolerance, rng=rng)


def check_all_losses(seed):
    return {
        "reconstruction": check_reconstruction(seed),
        "supervised": check_supervised(seed),
        "critic_gp": check_critic_gp(seed),
        "critic_gp_linear": check_critic_gp(seed, output="linear", in_dim=10),
        "generator": check_generator(seed),
    }


def _smooth_model(seed, critic_hidden=(4,)):
    # Binary frames with zero biases put many conv pre-activations exactly on
    # the ReLU kink and create max-pool ties; random biases and continuous
    # inputs keep the check on differentiable points.
    model = CaaeModel(seed=seed, dtype=F64, critic_hidden=critic_hidden)
    rng = np.random.default_rng(seed)
    for p in model.params():
        if p.name.endswith(".bias"):
            p.value[...] = rng.uniform(-0.1, 0.1, size=p.shape)
    return model, rng


def check_model_reconstruction(seed, max_entries=6):
    """Reconstruction loss back through decoder and encoder of the real topology."""
    model, rng = _smooth_model(seed)
    x = rng.uniform(0, 1, size=(2, 1, 32, 32))

    def loss():
        y, z = model.encoder.forward(x, train=False)
        return reconstruction_loss(x[:, 0, :29, :29], model.decoder.forward(y, z))[0]

    model.zero_grad()
    y, z = model.encoder.forward(x, train=False)
    _, g = reconstruction_loss(x[:, 0, :29, :29], model.decoder.forward(y, z))
    gy, gz = model.decoder.backward(g)
    model.encoder.backward(gy, gz)
    params = model.encoder.params() + model.decoder.params()
    return grad_check(loss, params, h=1e-6, tolerance=1e-4, max_entries=max_entries, rng=rng)


def check_model_supervised(seed, max_entries=6):
    model, rng = _smooth_model(seed)
    x = rng.uniform(0, 1, size=(4, 1, 32, 32))
    t = one_hot(np.array([0, 1, 0, 1]), F64)

    def loss():
        return supervised_loss(model.encoder.forward(x)[0], t)[0]

    model.zero_grad()
    y, _ = model.encoder.forward(x)
    _, gy = supervised_loss(y, t)
    model.encoder.backward(gy, None)
    return grad_check(loss, model.encoder.params(), h=1e-6, tolerance=1e-4,
                      max_entries=max_entries, rng=rng)


def check_model_critic(seed):
    """Categorical critic loss on real prior draws (one-hot targets, uniform epsilon)."""
    model, rng = _smooth_model(seed, critic_hidden=(6, 6))
    pri = sample_priors(rng, 3, F64)
    for p in model.d_cat.params():
        p.zero_grad()
    y = rng.dirichlet((1, 1), size=3)
    critic_loss_with_gp(model.d_cat, y, pri.y_prior, pri.epsilon)
    analytic = [p.grad.copy() for p in model.d_cat.params()]
    return grad_check(lambda: critic_loss_with_gp(model.d_cat, y, pri.y_prior, pri.epsilon)[0],
                      model.d_cat.params(), analytic, tolerance=1e-3, rng=rng)
