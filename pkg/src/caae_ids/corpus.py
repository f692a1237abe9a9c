"""Frame corpora for experiments: synthetic captures or HCRL log files.

A corpus maps an attack kind to its abnormal frames, with every normal
frame of every capture pooled under ``"normal"``, which is the input shape
:func:`caae_ids.framing.split_dataset` expects.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from pathlib import Path

from .can_core import CanMessage, read_log
from .framing import FRAME_SIZE, Frame, build_frames, group_by_class
from .traffic_sim import CAPTURE_PRESETS, simulate_capture

DESK_CAPTURES = ("dos", "fuzzy", "gear", "rpm")
# Gear and RPM spoofing play the roles of the two spoof attacks.
SPOOF_A = "gear"
SPOOF_B = "rpm"

# Normal traffic of the default profile, used to size the simulated duration.
_NORMAL_RATE = 1670.0


def simulate_messages(kind: str, n_messages: int, seed: int = 0) -> list[CanMessage]:
    """First ``n_messages`` messages of a simulated capture of ``kind``."""
    preset = CAPTURE_PRESETS[kind]
    duty = preset.burst / (preset.burst + preset.gap)
    rate = _NORMAL_RATE + preset.rate * duty
    duration = 1.1 * n_messages / rate + preset.gap + preset.burst
    while True:
        messages = simulate_capture(kind, duration=duration, seed=seed)
        if len(messages) >= n_messages:
            return messages[:n_messages]
        duration *= 1.25


def frames_of(messages: Sequence[CanMessage], kind: str, source: str = "",
              stride: int = FRAME_SIZE) -> list[Frame]:
    return build_frames(messages, stride=stride, attack_kind=kind, source=source or kind)


def merge_groups(groups: Iterable[dict[str, list[Frame]]]) -> dict[str, list[Frame]]:
    out: dict[str, list[Frame]] = {}
    for g in groups:
        for kind, frames in g.items():
            out.setdefault(kind, []).extend(frames)
    return out


def synthetic_corpus(
    kinds: Sequence[str] = DESK_CAPTURES,
    n_messages: int = 100_000,
    seed: int = 0,
    stride: int = FRAME_SIZE,
) -> dict[str, list[Frame]]:
    """Simulate one capture per kind and frame it.

    Each capture gets its own seed derived from ``seed`` and its position in
    ``kinds`` so the captures are independent but reproducible.
    """
    groups = []
    for i, kind in enumerate(kinds):
        messages = simulate_messages(kind, n_messages, seed=seed * 101 + i)
        groups.append(group_by_class(frames_of(messages, kind, stride=stride)))
    return merge_groups(groups)


def hcrl_corpus(
    paths: dict[str, str | Path],
    n_messages: int | None = None,
    stride: int = FRAME_SIZE,
) -> dict[str, list[Frame]]:
    """Frame HCRL logs given as ``{kind: path}``, optionally truncated."""
    groups = []
    for kind, path in paths.items():
        messages = read_log(path)
        if n_messages is not None:
            messages = messages[:n_messages]
        groups.append(group_by_class(frames_of(messages, kind, Path(path).stem, stride)))
    return merge_groups(groups)
