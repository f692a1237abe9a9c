"""CAAE topology: convolutional encoder/decoder and the two latent critics.

Encoder::

    (N,1,32,32) -> conv 1->16, ReLU, pool -> conv 16->32, ReLU, pool
                -> flatten 2048 -> dropout(0.15) -> { dense 2048->2, softmax  (class latent)
                                                    { dense 2048->10         (style latent)

Decoder (resize-convolution in place of transposed convolution)::

    [y, z] (12) -> dense 2048, ReLU -> (32,8,8) -> upsample, conv 32->16, ReLU
                -> upsample, conv 16->1, sigmoid -> crop to 29x29

Critics are ReLU MLPs with two hidden layers of 1000 units.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..errors import ShapeError
from ..framing import ABNORMAL, FRAME_SIZE, NORMAL, PADDED_SIZE, Frame, pad_frame, stack_padded
from ..nn import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2x2,
    Param,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Upsample2x2,
    make_critic,
)

CLASS_DIM = 2
STYLE_DIM = 10
FEATURES = 32 * 8 * 8
CRITIC_HIDDEN = (1000, 1000)
DROPOUT_RATE = 0.15


class Encoder:
    def __init__(self, rng: np.random.Generator, dtype=np.float32, dropout: float = DROPOUT_RATE):
        self.trunk = Sequential(
            Conv2d(1, 16, rng, "encoder.conv1", dtype),
            ReLU(),
            MaxPool2x2(),
            Conv2d(16, 32, rng, "encoder.conv2", dtype),
            ReLU(),
            MaxPool2x2(),
            Flatten(),
            Dropout(dropout, rng),
        )
        self.head_y = Dense(FEATURES, CLASS_DIM, rng, "encoder.head_y", dtype)
        self.softmax = Softmax()
        self.head_z = Dense(FEATURES, STYLE_DIM, rng, "encoder.head_z", dtype)

    def params(self) -> list[Param]:
        return self.trunk.params() + self.head_y.params() + self.head_z.params()

    def forward(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, np.ndarray]:
        if x.ndim != 4 or x.shape[1:] != (1, PADDED_SIZE, PADDED_SIZE):
            raise ShapeError(f"encoder expects (N, 1, 32, 32), got {x.shape}")
        h = self.trunk.forward(x, train)
        y = self.softmax.forward(self.head_y.forward(h))
        z = self.head_z.forward(h)
        return y, z

    def backward(self, grad_y: np.ndarray | None, grad_z: np.ndarray | None) -> np.ndarray:
        dh = 0.0
        if grad_y is not None:
            dh = dh + self.head_y.backward(self.softmax.backward(grad_y))
        if grad_z is not None:
            dh = dh + self.head_z.backward(grad_z)
        return self.trunk.backward(dh)


class Decoder:
    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.net = Sequential(
            Dense(CLASS_DIM + STYLE_DIM, FEATURES, rng, "decoder.fc", dtype),
            ReLU(),
            Reshape((32, 8, 8)),
            Upsample2x2(),
            Conv2d(32, 16, rng, "decoder.conv1", dtype),
            ReLU(),
            Upsample2x2(),
            Conv2d(16, 1, rng, "decoder.conv2", dtype),
            Sigmoid(),
        )

    def params(self) -> list[Param]:
        return self.net.params()

    def forward(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Reconstruct ``(N, 29, 29)`` frames from the concatenated latents."""
        if y.ndim != 2 or y.shape[1] != CLASS_DIM or z.shape != (y.shape[0], STYLE_DIM):
            raise ShapeError(f"decoder expects (N, 2) and (N, 10), got {y.shape}, {z.shape}")
        out = self.net.forward(np.concatenate([y, z], axis=1))
        return out[:, 0, :FRAME_SIZE, :FRAME_SIZE]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        full = np.zeros((grad.shape[0], 1, PADDED_SIZE, PADDED_SIZE), dtype=grad.dtype)
        full[:, 0, :FRAME_SIZE, :FRAME_SIZE] = grad
        g = self.net.backward(full)
        return g[:, :CLASS_DIM], g[:, CLASS_DIM:]


class CaaeModel:
    """Encoder, decoder and the categorical/Gaussian critics.

    Args:
        seed: seeds weight initialization, dropout and prior sampling.
        critic_output: ``"sigmoid"`` (default) or ``"linear"`` critic output.
        encoder_only: build only the encoder, as for a deployed detector.
    """

    def __init__(self, seed: int = 0, critic_output: str = "sigmoid", dtype=np.float32,
                 encoder_only: bool = False, critic_hidden: Sequence[int] = CRITIC_HIDDEN):
        self.seed = seed
        self.critic_output = critic_output
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.epoch = 0
        self.encoder = Encoder(self.rng, dtype)
        self.encoder_only = encoder_only
        if encoder_only:
            self.decoder = self.d_cat = self.d_gaus = None
        else:
            self.decoder = Decoder(self.rng, dtype)
            self.d_cat = make_critic(CLASS_DIM, critic_hidden, self.rng, critic_output, "d_cat", dtype)
            self.d_gaus = make_critic(STYLE_DIM, critic_hidden, self.rng, critic_output, "d_gaus", dtype)

    def components(self) -> dict[str, list[Param]]:
        comps = {"encoder": self.encoder.params()}
        if not self.encoder_only:
            comps["decoder"] = self.decoder.params()
            comps["d_cat"] = self.d_cat.params()
            comps["d_gaus"] = self.d_gaus.params()
        return comps

    def params(self) -> list[Param]:
        return [p for ps in self.components().values() for p in ps]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params()}

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def astype(self, dtype) -> "CaaeModel":
        """Convert every parameter in place (float64 for gradient checks)."""
        self.dtype = np.dtype(dtype)
        for p in self.params():
            p.astype(dtype)
        return self

    def encode(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, np.ndarray]:
        return self.encoder.forward(np.asarray(x, dtype=self.dtype), train)

    def decode(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.decoder.forward(y, z)


def param_count(obj) -> int:
    """Number of trainable scalars in a model, component or parameter list."""
    params = obj.params() if hasattr(obj, "params") else obj
    return int(sum(p.size for p in params))


def _as_batch(model: CaaeModel, frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        x = frames
        if x.ndim == 3 and x.shape[1:] == (FRAME_SIZE, FRAME_SIZE):
            x = pad_frame(x)[:, None]
        return np.asarray(x, dtype=model.dtype)
    frames = list(frames)
    if frames and not isinstance(frames[0], Frame):
        raise ShapeError("predict expects Frame objects or an array of frames")
    return stack_padded(frames, dtype=model.dtype)


def decide(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class decision from softmax outputs: argmax, ties go to abnormal."""
    y = np.atleast_2d(y)
    classes = np.where(y[:, ABNORMAL] >= y[:, NORMAL], ABNORMAL, NORMAL)
    return classes, y[:, ABNORMAL].astype(np.float64)


def predict(model: CaaeModel, frames, batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Classify frames with the encoder only.

    Accepts Frame objects, ``(N, 29, 29)`` bit arrays or padded
    ``(N, 1, 32, 32)`` batches. Returns ``(classes, scores)`` where the score
    is P(abnormal) and a 0.5/0.5 tie resolves to abnormal.
    """
    x = _as_batch(model, frames)
    classes = np.empty(x.shape[0], dtype=np.int64)
    scores = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], batch_size):
        y, _ = model.encoder.forward(x[start:start + batch_size], train=False)
        chunk = slice(start, start + batch_size)
        classes[chunk], scores[chunk] = decide(y)
    return classes, scores
