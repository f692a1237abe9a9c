"""Deterministic synthetic CAN traffic with DoS, fuzzy and spoofing injection.

Normal traffic is a set of periodic broadcasts, one schedule per identifier,
each tick displaced by uniform jitter. Injectors add attacker messages at a
mean rate inside a time window and merge them into the stream without
touching any original message. Everything is a pure function of its inputs
and seeds.
"""

from __future__ import annotations

import enum
import heapq
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .can_core import ID_BITS, STANDARD_ID_BITS, CanMessage, MessageFlag, check_can_id
from .errors import ConfigError

# microsecond resolution, matches the HCRL log precision
_TS_DECIMALS = 6


class AttackKind(enum.Enum):
    DOS = "dos"
    FUZZY = "fuzzy"
    SPOOF = "spoof"


@dataclass(frozen=True)
class NormalProfile:
    """Periodic background traffic.

    ``id_set`` holds ``(can_id, period_seconds, jitter_fraction)`` triples.
    """

    id_set: Sequence[tuple[int, float, float]]
    duration: float
    seed: int = 0

    def __post_init__(self):
        if not self.id_set:
            raise ConfigError("id_set must not be empty")
        ids = [entry[0] for entry in self.id_set]
        if len(set(ids)) != len(ids):
            raise ConfigError("CAN IDs in a profile must be distinct")
        for can_id, period, jitter in self.id_set:
            check_can_id(can_id)
            if period <= 0:
                raise ConfigError(f"period for {can_id:#x} must be positive")
            if not 0 <= jitter < 1:
                raise ConfigError(f"jitter for {can_id:#x} must be in [0, 1)")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")


@dataclass(frozen=True)
class AttackSpec:
    """One injection campaign.

    Args:
        kind: attack model.
        rate: mean injected messages per second inside the window.
        window: ``(start, end)`` in seconds; must lie inside the stream span.
        seed: RNG seed for arrival times, IDs and payloads.
        target_id: impersonated identifier, required for (and only for) spoofing.
        id_bits: identifier width drawn by the fuzzy attack (29 or 11).
        payload: attacker payload for spoofing/DoS; defaults per kind.
    """

    kind: AttackKind
    rate: float
    window: tuple[float, float]
    seed: int = 0
    target_id: int | None = None
    id_bits: int = ID_BITS
    payload: bytes | None = None

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError("attack rate must be positive")
        start, end = self.window
        if end < start:
            raise ConfigError(f"window end {end} precedes start {start}")
        if (self.target_id is not None) != (self.kind is AttackKind.SPOOF):
            raise ConfigError("target_id must be given exactly for spoofing attacks")
        if self.target_id is not None:
            check_can_id(self.target_id)
        if self.id_bits not in (STANDARD_ID_BITS, ID_BITS):
            raise ConfigError("id_bits must be 11 or 29")


def _ts(values: np.ndarray) -> np.ndarray:
    return np.round(values, _TS_DECIMALS)


def gen_normal(profile: NormalProfile) -> list[CanMessage]:
    """Generate the jittered periodic schedule of every ID, merged by time.

    Tick ``k`` of an ID with period ``p`` and jitter ``j`` fires at
    ``k*p + U(-j, j)*p`` for ``k = 1 .. floor(duration/p)``; ticks pushed
    outside ``(0, duration]`` are dropped.
    """
    rng = np.random.default_rng(profile.seed)
    times, ids, payloads = [], [], []
    for can_id, period, jitter in profile.id_set:
        n = int(np.floor(profile.duration / period + 1e-9))
        t = np.arange(1, n + 1) * period
        if jitter > 0:
            t = t + rng.uniform(-jitter, jitter, size=n) * period
        t = _ts(t)
        keep = (t > 0) & (t <= profile.duration)
        t = t[keep]
        # payload content is irrelevant to the ID-only detector
        data = rng.integers(0, 256, size=(len(t), 8), dtype=np.uint8)
        times.append(t)
        ids.append(np.full(len(t), can_id, dtype=np.int64))
        payloads.append(data)
    t = np.concatenate(times)
    i = np.concatenate(ids)
    d = np.concatenate(payloads)
    order = np.lexsort((i, t))
    return [
        CanMessage(float(t[k]), int(i[k]), d[k].tobytes(), MessageFlag.NORMAL)
        for k in order
    ]


def _check_window(stream: Sequence[CanMessage], spec: AttackSpec) -> None:
    start, end = spec.window
    if end == start:
        return
    if not stream:
        raise ConfigError("cannot inject into an empty stream")
    lo, hi = stream[0].timestamp, stream[-1].timestamp
    if start < lo or end > hi:
        raise ConfigError(f"attack window {spec.window} outside stream span ({lo}, {hi})")


def _arrivals(spec: AttackSpec, rng: np.random.Generator) -> np.ndarray:
    start, end = spec.window
    n = int(round(spec.rate * (end - start)))
    return np.sort(_ts(rng.uniform(start, end, size=n)))


def _merge(stream: Sequence[CanMessage], injected: list[CanMessage]) -> list[CanMessage]:
    # original messages come first on equal timestamps, so their order survives
    injected.sort(key=lambda m: (m.timestamp, m.can_id))
    return list(heapq.merge(stream, injected, key=lambda m: m.timestamp))


def _require(spec: AttackSpec, kind: AttackKind) -> None:
    if spec.kind is not kind:
        raise ConfigError(f"expected a {kind.value} attack spec, got {spec.kind.value}")


def inject_dos(stream: Sequence[CanMessage], spec: AttackSpec) -> list[CanMessage]:
    """Flood the window with highest-priority ID 0x000 messages."""
    _require(spec, AttackKind.DOS)
    _check_window(stream, spec)
    rng = np.random.default_rng(spec.seed)
    payload = bytes(8) if spec.payload is None else spec.payload
    injected = [
        CanMessage(float(t), 0x000, payload, MessageFlag.INJECTED)
        for t in _arrivals(spec, rng)
    ]
    return _merge(stream, injected)


def inject_fuzzy(stream: Sequence[CanMessage], spec: AttackSpec) -> list[CanMessage]:
    """Inject messages with uniformly random IDs and random 8-byte payloads."""
    _require(spec, AttackKind.FUZZY)
    _check_window(stream, spec)
    rng = np.random.default_rng(spec.seed)
    times = _arrivals(spec, rng)
    ids = rng.integers(0, 1 << spec.id_bits, size=len(times))
    data = rng.integers(0, 256, size=(len(times), 8), dtype=np.uint8)
    injected = [
        CanMessage(float(t), int(i), d.tobytes(), MessageFlag.INJECTED)
        for t, i, d in zip(times, ids, data)
    ]
    return _merge(stream, injected)


def inject_spoof(stream: Sequence[CanMessage], spec: AttackSpec) -> list[CanMessage]:
    """Impersonate ``spec.target_id`` with a fixed attacker payload."""
    _require(spec, AttackKind.SPOOF)
    _check_window(stream, spec)
    rng = np.random.default_rng(spec.seed)
    payload = bytes.fromhex("ffffffffffffffff") if spec.payload is None else spec.payload
    injected = [
        CanMessage(float(t), spec.target_id, payload, MessageFlag.INJECTED)
        for t in _arrivals(spec, rng)
    ]
    return _merge(stream, injected)


def inject(stream: Sequence[CanMessage], spec: AttackSpec) -> list[CanMessage]:
    """Dispatch to the injector matching ``spec.kind``."""
    injector = {
        AttackKind.DOS: inject_dos,
        AttackKind.FUZZY: inject_fuzzy,
        AttackKind.SPOOF: inject_spoof,
    }[spec.kind]
    return injector(stream, spec)


# A small synthetic vehicle: IDs and periods loosely modeled on a passenger
# car powertrain bus. 0x316 and 0x43f carry RPM and gear information.
DEFAULT_ID_SET: tuple[tuple[int, float, float], ...] = (
    (0x018F, 0.010, 0.05),
    (0x0260, 0.010, 0.05),
    (0x02A0, 0.010, 0.05),
    (0x0316, 0.010, 0.05),
    (0x0329, 0.010, 0.05),
    (0x0350, 0.020, 0.05),
    (0x0370, 0.010, 0.05),
    (0x0382, 0.020, 0.05),
    (0x043F, 0.010, 0.05),
    (0x0440, 0.010, 0.05),
    (0x04B1, 0.020, 0.05),
    (0x04F0, 0.020, 0.05),
    (0x0545, 0.010, 0.05),
    (0x0587, 0.100, 0.05),
    (0x059B, 0.100, 0.05),
    (0x05E4, 0.100, 0.05),
    (0x05F0, 0.200, 0.05),
    (0x0690, 0.100, 0.05),
    (0x06F1, 0.200, 0.05),
    (0x0080, 0.010, 0.05),
    (0x0081, 0.010, 0.05),
    (0x00A0, 0.100, 0.05),
    (0x00A1, 0.100, 0.05),
    (0x0153, 0.010, 0.05),
    (0x0164, 0.010, 0.05),
    (0x0220, 0.010, 0.05),
)

GEAR_ID = 0x043F
RPM_ID = 0x0316


def default_profile(duration: float = 60.0, seed: int = 0) -> NormalProfile:
    return NormalProfile(DEFAULT_ID_SET, duration, seed)


@dataclass(frozen=True)
class CaptureSpec:
    """An HCRL-style capture: normal traffic with periodic attack bursts.

    Attacks are switched on for ``burst`` seconds every ``burst + gap`` seconds,
    starting ``gap`` seconds in.
    """

    attack: AttackKind
    rate: float
    burst: float = 2.0
    gap: float = 4.0
    target_id: int | None = None
    id_bits: int = ID_BITS
    payload: bytes | None = None


# Burst rate and gap per kind are solved from two HCRL reference shares:
# injected messages among all messages, and abnormal frames among all
# frames. The second fixes how many injected messages an abnormal frame
# carries (rate), the first then fixes the duty cycle (gap).
CAPTURE_PRESETS: dict[str, CaptureSpec] = {
    "dos": CaptureSpec(AttackKind.DOS, rate=1968.0, gap=10.35),
    "fuzzy": CaptureSpec(AttackKind.FUZZY, rate=1029.0, gap=6.39),
    "gear": CaptureSpec(AttackKind.SPOOF, rate=770.0, gap=2.27, target_id=GEAR_ID),
    "rpm": CaptureSpec(AttackKind.SPOOF, rate=773.0, gap=1.24, target_id=RPM_ID),
}


def simulate_capture(
    capture: CaptureSpec | str,
    duration: float = 60.0,
    seed: int = 0,
    profile: NormalProfile | None = None,
) -> list[CanMessage]:
    """Generate normal traffic and inject bursts of one attack kind.

    ``capture`` is a :class:`CaptureSpec` or the name of a preset
    (``dos``, ``fuzzy``, ``gear``, ``rpm``).
    """
    if isinstance(capture, str):
        try:
            capture = CAPTURE_PRESETS[capture]
        except KeyError:
            raise ConfigError(f"unknown capture preset {capture!r}") from None
    if profile is None:
        profile = default_profile(duration, seed)
    stream = gen_normal(profile)
    if not stream:
        return stream
    lo, hi = stream[0].timestamp, stream[-1].timestamp
    start = lo + capture.gap
    burst_index = 0
    while start + capture.burst <= hi:
        spec = AttackSpec(
            capture.attack,
            capture.rate,
            (start, start + capture.burst),
            seed=seed * 1_000_003 + burst_index + 1,
            target_id=capture.target_id,
            id_bits=capture.id_bits,
            payload=capture.payload,
        )
        stream = inject(stream, spec)
        start += capture.burst + capture.gap
        burst_index += 1
    return stream
