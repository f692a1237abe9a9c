"""CAN-ID frames, padding, dataset splits and the frame cache format.

A frame stacks the 29-bit IDs of 29 consecutive messages into a 29x29 binary
matrix. It is labeled abnormal when any of its messages was injected.
"""

from __future__ import annotations

import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .can_core import ID_BITS, CanMessage, encode_ids
from .errors import CheckpointError, ConfigError, InsufficientData, IoError, ShapeError

FRAME_SIZE = ID_BITS
PADDED_SIZE = 32

NORMAL = 0
ABNORMAL = 1

# Kind byte table of the frame cache; index 0 means "no attack".
ATTACK_KINDS: tuple[str, ...] = (
    "normal", "dos", "fuzzy", "gear", "rpm", "spoof", "spoof_a", "spoof_b", "unknown",
)


@dataclass(frozen=True, eq=False)
class Frame:
    """A 29x29 frame of stacked ID bits with its label and provenance."""

    bits: np.ndarray
    label: int
    attack_kind: str = "normal"
    window_index: int = 0
    source: str = ""

    def __post_init__(self):
        if self.bits.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ShapeError(f"frame bits must be 29x29, got {self.bits.shape}")
        if self.label not in (NORMAL, ABNORMAL):
            raise ConfigError(f"label must be 0 or 1, got {self.label}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.source, self.window_index)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.label == other.label
            and self.attack_kind == other.attack_kind
            and self.key == other.key
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.key, self.label, self.bits.tobytes()))


def build_frames(
    messages: Sequence[CanMessage],
    stride: int = FRAME_SIZE,
    attack_kind: str = "unknown",
    source: str = "",
) -> list[Frame]:
    """Slide a 29-message window over ``messages`` and build one frame per step.

    Args:
        messages: message stream in bus order.
        stride: window step; 29 gives non-overlapping windows. A trailing
            remainder shorter than 29 messages is dropped.
        attack_kind: kind recorded on abnormal frames; normal frames get "normal".
        source: provenance tag stored on every frame.

    Raises:
        InsufficientData: fewer than 29 messages.
    """
    if stride < 1:
        raise ConfigError("stride must be a positive integer")
    if len(messages) < FRAME_SIZE:
        raise InsufficientData(f"need at least {FRAME_SIZE} messages, got {len(messages)}")
    ids = np.fromiter((m.can_id for m in messages), dtype=np.int64, count=len(messages))
    injected = np.fromiter((m.injected for m in messages), dtype=bool, count=len(messages))
    bits = encode_ids(ids)
    frames = []
    for w, start in enumerate(range(0, len(messages) - FRAME_SIZE + 1, stride)):
        stop = start + FRAME_SIZE
        label = ABNORMAL if injected[start:stop].any() else NORMAL
        frames.append(
            Frame(
                bits[start:stop].copy(),
                label,
                attack_kind if label == ABNORMAL else "normal",
                w,
                source,
            )
        )
    return frames


def pad_frame(frame: Frame | np.ndarray) -> np.ndarray:
    """Zero-pad a frame to 32x32: three rows at the bottom, three columns on the right."""
    bits = frame.bits if isinstance(frame, Frame) else np.asarray(frame)
    out = np.zeros(bits.shape[:-2] + (PADDED_SIZE, PADDED_SIZE), dtype=np.float32)
    out[..., :FRAME_SIZE, :FRAME_SIZE] = bits
    return out


def crop_frame(padded: np.ndarray) -> np.ndarray:
    return np.asarray(padded)[..., :FRAME_SIZE, :FRAME_SIZE]


def stack_padded(frames: Sequence[Frame], dtype=np.float32) -> np.ndarray:
    """Batch of frames as an ``(N, 1, 32, 32)`` array ready for the encoder."""
    out = np.zeros((len(frames), 1, PADDED_SIZE, PADDED_SIZE), dtype=dtype)
    for i, f in enumerate(frames):
        out[i, 0, :FRAME_SIZE, :FRAME_SIZE] = f.bits
    return out


def labels_of(frames: Sequence[Frame]) -> np.ndarray:
    return np.fromiter((f.label for f in frames), dtype=np.int64, count=len(frames))


@dataclass(frozen=True)
class SplitConfig:
    """Split fractions for normal frames and subsampling ratios.

    ``train_ratio`` is the share of each attack kind's frames used for
    training; ``label_ratio`` the share of training frames (per class) that
    keep their label.
    """

    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    train_ratio: float = 0.1
    label_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if not all(0 < f < 1 for f in fracs):
            raise ConfigError("split fractions must lie in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {sum(fracs)}, not 1")
        for name in ("train_ratio", "label_ratio"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")


@dataclass
class DataBundle:
    """Training pools and held-out sets produced by :func:`split_dataset`.

    ``unlabeled`` holds every training frame, including the bits of the
    labeled ones. ``held_out`` names the attack kind removed by
    :func:`leave_one_out` and ``withheld`` keeps its removed labeled frames.
    """

    labeled: list[Frame]
    unlabeled: list[Frame]
    val: list[Frame]
    test: list[Frame]
    config: SplitConfig | None = None
    held_out: str | None = None
    withheld: list[Frame] = field(default_factory=list)

    @property
    def train(self) -> list[Frame]:
        return self.unlabeled

    def labeled_kinds(self) -> set[str]:
        return {f.attack_kind for f in self.labeled}

    def unknown_test(self) -> list[Frame]:
        """Normal test frames plus the held-out kind's test frames."""
        if self.held_out is None:
            raise ConfigError("bundle has no held-out attack kind")
        return [f for f in self.test if f.attack_kind in ("normal", self.held_out)]

    def known_test(self) -> list[Frame]:
        """Normal test frames plus every other kind's test frames."""
        if self.held_out is None:
            raise ConfigError("bundle has no held-out attack kind")
        return [f for f in self.test if f.attack_kind != self.held_out]


def _take(n_total: int, frac: float) -> int:
    return int(round(n_total * frac))


def split_dataset(frames_by_class: Mapping[str, Sequence[Frame]], config: SplitConfig) -> DataBundle:
    """Split frames into labeled/unlabeled training pools, validation and test.

    Normal frames (key ``"normal"``) are split by ``train/val/test_frac``.
    Each attack kind contributes ``train_ratio`` of its frames to training and
    ``val_frac`` of its frames to validation; everything else goes to test. The
    labeled subset is a per-class prefix of a seeded permutation of that
    class's training frames, so a smaller ``label_ratio`` always yields a
    subset of a larger one.

    Raises:
        ConfigError: an empty class, or a class that would get no labeled frame.
    """
    rng = np.random.default_rng(config.seed)
    labeled: list[Frame] = []
    unlabeled: list[Frame] = []
    val: list[Frame] = []
    test: list[Frame] = []
    for kind in sorted(frames_by_class):
        pool = list(frames_by_class[kind])
        if not pool:
            raise ConfigError(f"class {kind!r} has no frames")
        # one permutation per class, drawn in sorted-kind order for determinism
        perm = rng.permutation(len(pool))
        n = len(pool)
        if kind == "normal":
            n_train = _take(n, config.train_frac)
            n_val = _take(n, config.val_frac)
        else:
            n_train = _take(n, config.train_ratio)
            n_val = min(_take(n, config.val_frac), (n - n_train) // 2)
        train_idx = perm[:n_train]
        val_idx = perm[n_train:n_train + n_val]
        test_idx = perm[n_train + n_val:]
        n_lab = _take(n_train, config.label_ratio)
        if n_lab == 0:
            raise ConfigError(
                f"class {kind!r}: label_ratio {config.label_ratio} of {n_train} "
                "training frames leaves no labeled frame"
            )
        lab_order = rng.permutation(n_train)
        labeled.extend(pool[train_idx[i]] for i in lab_order[:n_lab])
        unlabeled.extend(pool[i] for i in train_idx)
        val.extend(pool[i] for i in val_idx)
        test.extend(pool[i] for i in test_idx)
    return DataBundle(labeled, unlabeled, val, test, config=config)


def leave_one_out(bundle: DataBundle, attack_kind: str) -> DataBundle:
    """Drop every labeled frame of ``attack_kind``; its unlabeled bits stay.

    The returned bundle's :meth:`DataBundle.unknown_test` and
    :meth:`DataBundle.known_test` partition the test set for the
    unknown-attack protocol.
    """
    if attack_kind == "normal" or attack_kind not in bundle.labeled_kinds():
        raise ConfigError(f"attack kind {attack_kind!r} is not in the labeled set")
    kept = [f for f in bundle.labeled if f.attack_kind != attack_kind]
    removed = [f for f in bundle.labeled if f.attack_kind == attack_kind]
    return replace(bundle, labeled=kept, held_out=attack_kind, withheld=removed)


def group_by_class(frames: Sequence[Frame]) -> dict[str, list[Frame]]:
    """Group frames by ``attack_kind`` (normal frames under ``"normal"``)."""
    groups: dict[str, list[Frame]] = {}
    for f in frames:
        groups.setdefault(f.attack_kind, []).append(f)
    return groups


# --- frame cache -----------------------------------------------------------

FRAMES_MAGIC = b"CANF"
FRAMES_VERSION = 1
_HEADER = struct.Struct("<4sII")
_BITS_BYTES = (FRAME_SIZE * FRAME_SIZE + 7) // 8
_RECORD = _BITS_BYTES + 2


def save_frames(frames: Sequence[Frame], path: str | Path) -> None:
    """Write frames to the binary cache format.

    Layout: header ``magic "CANF", u32 version, u32 count``, then per frame
    the 841 bits packed row-major (106 bytes), one label byte and one kind
    byte indexing :data:`ATTACK_KINDS`.
    """
    buf = bytearray(_HEADER.pack(FRAMES_MAGIC, FRAMES_VERSION, len(frames)))
    for f in frames:
        try:
            kind = ATTACK_KINDS.index(f.attack_kind)
        except ValueError:
            raise ConfigError(f"attack kind {f.attack_kind!r} has no cache code") from None
        buf += np.packbits(f.bits.astype(np.uint8).ravel()).tobytes()
        buf += bytes((f.label, kind))
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_frames(path: str | Path, source: str | None = None) -> list[Frame]:
    """Read a frame cache. ``window_index`` is restored as the file position."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != FRAMES_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != FRAMES_VERSION:
        raise CheckpointError(f"{path}: unsupported frame cache version {version}")
    if len(raw) != _HEADER.size + count * _RECORD:
        raise CheckpointError(f"{path}: expected {count} frames, size mismatch")
    src = Path(path).stem if source is None else source
    body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).reshape(count, _RECORD)
    bits = np.unpackbits(body[:, :_BITS_BYTES], axis=1)[:, : FRAME_SIZE * FRAME_SIZE]
    bits = bits.reshape(count, FRAME_SIZE, FRAME_SIZE)
    frames = []
    for i in range(count):
        label, kind = int(body[i, _BITS_BYTES]), int(body[i, _BITS_BYTES + 1])
        if label not in (NORMAL, ABNORMAL) or kind >= len(ATTACK_KINDS):
            raise CheckpointError(f"{path}: corrupt record {i}")
        frames.append(Frame(bits[i].copy(), label, ATTACK_KINDS[kind], i, src))
    return frames
