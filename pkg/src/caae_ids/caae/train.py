"""Three-phase semi-supervised CAAE training.

Every minibatch runs, in order:

1. reconstruction: encoder + decoder on unlabeled frames;
2. regularization: the categorical critic, then the Gaussian critic, then the
   encoder as generator against both critics;
3. supervised: the encoder on a class-stratified labeled minibatch.

Each phase owns its Adam optimizer, so the encoder keeps three independent
sets of moment estimates.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericsError
from ..framing import ABNORMAL, NORMAL, DataBundle, Frame, labels_of, stack_padded
from ..metrics import MetricsReport, evaluate_predictions
from ..nn import Adam, AdamConfig
from .losses import (
    GP_WEIGHT,
    critic_loss_with_gp,
    generator_loss,
    one_hot,
    reconstruction_loss,
    sample_priors,
    supervised_loss,
)
from .model import CaaeModel, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr_reconstruction: float = 1e-4
    lr_regularization: float = 1e-4
    lr_supervised: float = 1e-4
    decay_factor: float = 0.1
    decay_epoch: int = 50
    gp_weight: float = GP_WEIGHT
    critic_output: str = "sigmoid"
    seed: int = 0
    validate: bool = True
    max_batches: int | None = None

    def adam(self, lr: float) -> AdamConfig:
        return AdamConfig(learning_rate=lr, decay_factor=self.decay_factor,
                          decay_epoch=self.decay_epoch)


@dataclass
class EpochRecord:
    epoch: int
    l_r: float
    l_cat: float
    l_gaus: float
    l_gen: float
    l_sup: float
    seconds: float
    val: MetricsReport | None = None

    def losses(self) -> tuple[float, ...]:
        return (self.l_r, self.l_cat, self.l_gaus, self.l_gen, self.l_sup)


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    wall_clock: float = 0.0

    def last(self) -> EpochRecord:
        return self.records[-1]


class LabeledSampler:
    """Draws class-balanced labeled minibatches, with replacement for scarce classes."""

    def __init__(self, frames: Sequence[Frame], rng: np.random.Generator, dtype=np.float32):
        if not frames:
            raise ConfigError("the labeled set is empty")
        self.x = stack_padded(frames, dtype)
        self.y = labels_of(frames)
        self.rng = rng
        self.by_class = [np.flatnonzero(self.y == c) for c in (NORMAL, ABNORMAL)]
        self.by_class = [idx for idx in self.by_class if idx.size]

    def sample(self, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
        k = len(self.by_class)
        sizes = [batch_size // k + (i < batch_size % k) for i in range(k)]
        picks = [
            self.rng.choice(idx, size=s, replace=idx.size < s)
            for idx, s in zip(self.by_class, sizes)
        ]
        sel = np.concatenate(picks)
        return self.x[sel], self.y[sel]


class CaaeTrainer:
    def __init__(self, model: CaaeModel, config: TrainConfig | None = None):
        if model.encoder_only:
            raise ConfigError("an encoder-only model cannot be trained")
        self.model = model
        self.config = config or TrainConfig()
        cfg = self.config
        enc = model.encoder.params()
        self.opt_rec = Adam(enc + model.decoder.params(), cfg.adam(cfg.lr_reconstruction))
        self.opt_cat = Adam(model.d_cat.params(), cfg.adam(cfg.lr_regularization))
        self.opt_gaus = Adam(model.d_gaus.params(), cfg.adam(cfg.lr_regularization))
        self.opt_gen = Adam(enc, cfg.adam(cfg.lr_regularization))
        self.opt_sup = Adam(enc, cfg.adam(cfg.lr_supervised))

    @property
    def epoch(self) -> int:
        return max(self.model.epoch, 1)

    def reconstruction_phase(self, x: np.ndarray) -> float:
        m = self.model
        self.opt_rec.zero_grad()
        y, z = m.encoder.forward(x, train=True)
        x_hat = m.decoder.forward(y, z)
        loss, grad = reconstruction_loss(x[:, 0, :29, :29], x_hat)
        gy, gz = m.decoder.backward(grad)
        m.encoder.backward(gy, gz)
        self.opt_rec.step(self.epoch)
        return loss

    def critic_phase(self, x: np.ndarray) -> tuple[float, float]:
        m = self.model
        y, z = m.encoder.forward(x, train=True)
        priors = sample_priors(m.rng, x.shape[0], m.dtype)
        self.opt_cat.zero_grad()
        l_cat, _ = critic_loss_with_gp(m.d_cat, y, priors.y_prior, priors.epsilon,
                                       self.config.gp_weight)
        self.opt_cat.step(self.epoch)
        self.opt_gaus.zero_grad()
        l_gaus, _ = critic_loss_with_gp(m.d_gaus, z, priors.z_prior, priors.epsilon,
                                        self.config.gp_weight)
        self.opt_gaus.step(self.epoch)
        return l_cat, l_gaus

    def generator_phase(self, x: np.ndarray) -> float:
        m = self.model
        self.opt_gen.zero_grad()
        y, z = m.encoder.forward(x, train=True)
        loss, gy, gz = generator_loss(m.d_cat, m.d_gaus, y, z)
        m.encoder.backward(gy, gz)
        self.opt_gen.step(self.epoch)
        return loss

    def supervised_phase(self, x: np.ndarray, labels: np.ndarray) -> float:
        m = self.model
        self.opt_sup.zero_grad()
        y, _ = m.encoder.forward(x, train=True)
        loss, gy = supervised_loss(y, one_hot(labels, m.dtype))
        m.encoder.backward(gy, None)
        self.opt_sup.step(self.epoch)
        return loss

    def step(self, x_ul: np.ndarray, x_l: np.ndarray, y_l: np.ndarray) -> tuple[float, ...]:
        l_r = self.reconstruction_phase(x_ul)
        l_cat, l_gaus = self.critic_phase(x_ul)
        l_gen = self.generator_phase(x_ul)
        l_sup = self.supervised_phase(x_l, y_l)
        return l_r, l_cat, l_gaus, l_gen, l_sup

    def fit(
        self,
        bundle: DataBundle,
        epochs: int | None = None,
        on_epoch: Callable[[EpochRecord], None] | None = None,
    ) -> TrainReport:
        cfg = self.config
        m = self.model
        epochs = cfg.epochs if epochs is None else epochs
        if not bundle.labeled:
            raise ConfigError("the labeled set is empty")
        if not bundle.unlabeled:
            raise ConfigError("the unlabeled pool is empty")
        batch_rng = np.random.default_rng([cfg.seed, 0x5EED])
        sampler = LabeledSampler(bundle.labeled, batch_rng, m.dtype)
        x_ul = stack_padded(bundle.unlabeled, m.dtype)
        report = TrainReport()
        started = time.perf_counter()
        for _ in range(epochs):
            m.epoch += 1
            t0 = time.perf_counter()
            order = batch_rng.permutation(x_ul.shape[0])
            batches = range(0, len(order), cfg.batch_size)
            if cfg.max_batches is not None:
                batches = batches[: cfg.max_batches]
            sums = np.zeros(5)
            for b, start in enumerate(batches):
                xb = x_ul[order[start:start + cfg.batch_size]]
                xl, yl = sampler.sample(cfg.batch_size)
                try:
                    losses = self.step(xb, xl, yl)
                except NumericsError as exc:
                    raise NumericsError(f"epoch {m.epoch}, batch {b}: {exc}") from exc
                sums += losses
            means = sums / max(len(batches), 1)
            val = None
            if cfg.validate and bundle.val:
                val = evaluate(m, bundle.val, {"name": "validation"})
            record = EpochRecord(m.epoch, *map(float, means), time.perf_counter() - t0, val)
            report.records.append(record)
            log.info(
                "epoch %d  L_R %.3f  L_cat %.3f  L_gaus %.3f  L_gen %.3f  L_sup %.4f  val F1 %s  (%.1fs)",
                record.epoch, *record.losses(),
                "-" if val is None or val.f1 is None else f"{val.f1:.4f}", record.seconds,
            )
            if on_epoch is not None:
                on_epoch(record)
        report.wall_clock = time.perf_counter() - started
        return report


def evaluate(model: CaaeModel, frames: Sequence[Frame], protocol: dict | None = None) -> MetricsReport:
    predicted, _ = predict(model, frames)
    return evaluate_predictions(predicted, labels_of(frames), protocol)


def train(
    bundle: DataBundle,
    config: TrainConfig | None = None,
    model: CaaeModel | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[CaaeModel, TrainReport]:
    """Train a CAAE on a data bundle; builds a fresh model seeded by ``config.seed``.

    Raises:
        ConfigError: empty labeled set.
        NumericsError: a loss or gradient became non-finite (message carries
            the epoch and batch).
    """
    config = config or TrainConfig()
    if model is None:
        model = CaaeModel(seed=config.seed, critic_output=config.critic_output)
    trainer = CaaeTrainer(model, config)
    report = trainer.fit(bundle, on_epoch=on_epoch)
    return model, report
