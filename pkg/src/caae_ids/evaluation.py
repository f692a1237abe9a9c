"""Known-attack and unknown-attack protocols plus the latency benchmark."""

from __future__ import annotations

import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .caae import CaaeModel, predict
from .errors import ConfigError, EmptyEvalError
from .framing import DataBundle, Frame, labels_of, pad_frame, stack_padded
from .metrics import MetricsReport, evaluate_predictions

WARMUP_ITERATIONS = 100


def _ratios(bundle: DataBundle) -> dict:
    cfg = bundle.config
    if cfg is None:
        return {}
    return {"train_ratio": cfg.train_ratio, "label_ratio": cfg.label_ratio}


def evaluate_frames(model: CaaeModel, frames: Sequence[Frame], protocol: dict) -> MetricsReport:
    if not frames:
        raise EmptyEvalError(f"{protocol.get('name', 'evaluation')}: no test frames")
    predicted, _ = predict(model, frames)
    return evaluate_predictions(predicted, labels_of(frames), protocol)


def run_known_protocol(model: CaaeModel, bundle: DataBundle) -> MetricsReport:
    """Score the whole test set; the report carries the bundle's ratios."""
    return evaluate_frames(model, bundle.test, {"name": "known", **_ratios(bundle)})


def run_unknown_protocol(model: CaaeModel, bundle: DataBundle) -> tuple[MetricsReport, MetricsReport]:
    """Score the held-out kind and the remaining kinds separately.

    Both reports include the full normal test set; the report protocol
    records this as ``normal_shared=True``.

    Raises:
        ConfigError: the bundle has no held-out kind, or the held-out kind
            still has labeled frames.
    """
    kind = bundle.held_out
    if kind is None:
        raise ConfigError("bundle was not produced by leave_one_out")
    if kind in bundle.labeled_kinds():
        raise ConfigError(f"attack kind {kind!r} was labeled during training")
    tags = {**_ratios(bundle), "held_out": kind, "normal_shared": True}
    unknown = evaluate_frames(model, bundle.unknown_test(), {"name": "unknown", **tags})
    known = evaluate_frames(model, bundle.known_test(), {"name": "known", **tags})
    return unknown, known


@dataclass(frozen=True)
class LatencyStats:
    """Per-frame wall-clock latency in milliseconds."""

    median_ms: float
    p95_ms: float
    mean_ms: float
    repetitions: int
    warmup: int

    def as_line(self) -> str:
        return f"latency,{self.repetitions},{self.median_ms:.4f},{self.p95_ms:.4f},{self.mean_ms:.4f}"


def measure_latency(
    model: CaaeModel,
    frames: Sequence[Frame] | np.ndarray,
    repetitions: int = 1000,
    warmup: int = WARMUP_ITERATIONS,
) -> LatencyStats:
    """Time encoder-only inference one frame at a time on a single thread.

    Frames are cycled if fewer than ``warmup + repetitions`` are given. The
    first ``warmup`` calls are discarded.

    Raises:
        ConfigError: ``repetitions`` < 1 or no frames.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    if isinstance(frames, np.ndarray):
        x = pad_frame(frames)[:, None] if frames.ndim == 3 else frames
    else:
        x = stack_padded(list(frames))
    if x.shape[0] == 0:
        raise ConfigError("latency benchmark needs at least one frame")
    x = x.astype(model.dtype)
    enc = model.encoder
    times = np.empty(repetitions)
    with threadpool_limits(1):
        for i in range(warmup + repetitions):
            xi = x[i % x.shape[0]][None]
            t0 = time.perf_counter()
            enc.forward(xi, train=False)
            dt = time.perf_counter() - t0
            if i >= warmup:
                times[i - warmup] = dt
    ms = times * 1e3
    return LatencyStats(float(np.median(ms)), float(np.percentile(ms, 95)), float(ms.mean()),
                        repetitions, warmup)
