"""CAN message representation, 29-bit identifier encoding and HCRL log I/O.

The HCRL car-hacking captures store one message per line::

    1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R

i.e. ``timestamp, ID (hex), DLC, DLC data bytes (hex), flag`` where the flag is
``R`` for a regular message and ``T`` for an injected one.
"""

from __future__ import annotations

import enum
import logging
import string
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError, ParseError, RangeError

log = logging.getLogger(__name__)

ID_BITS = 29
MAX_ID = (1 << ID_BITS) - 1
STANDARD_ID_BITS = 11
MAX_DLC = 8

_HEX_DIGITS = frozenset(string.hexdigits)
# row-major weights for bit index 0..28, MSB first
_BIT_WEIGHTS = (1 << np.arange(ID_BITS - 1, -1, -1, dtype=np.int64))


class MessageFlag(enum.Enum):
    NORMAL = "R"
    INJECTED = "T"


def check_can_id(value: int) -> int:
    """Return ``value`` if it is a valid 29-bit identifier, else raise RangeError."""
    if not 0 <= value <= MAX_ID:
        raise RangeError(f"CAN ID {value:#x} does not fit in {ID_BITS} bits")
    return int(value)


@dataclass(frozen=True, slots=True)
class CanMessage:
    """One timestamped bus message."""

    timestamp: float
    can_id: int
    data: bytes = b""
    flag: MessageFlag = MessageFlag.NORMAL

    def __post_init__(self):
        check_can_id(self.can_id)
        if len(self.data) > MAX_DLC:
            raise RangeError(f"payload of {len(self.data)} bytes exceeds {MAX_DLC}")

    @property
    def dlc(self) -> int:
        return len(self.data)

    @property
    def injected(self) -> bool:
        return self.flag is MessageFlag.INJECTED


def parse_hex_id(text: str) -> int:
    """Parse a 1-8 digit hexadecimal CAN identifier.

    Leading zeros and either letter case are accepted.

    Raises:
        ParseError: empty text, too many digits or a non-hex character.
        RangeError: the value needs more than 29 bits.
    """
    text = text.strip()
    if not 1 <= len(text) <= 8 or not set(text) <= _HEX_DIGITS:
        raise ParseError(f"not a CAN ID in hex: {text!r}")
    return check_can_id(int(text, 16))


def format_hex(can_id: int) -> str:
    """Format an identifier the way HCRL logs do (4 digits, 8 for extended IDs)."""
    check_can_id(can_id)
    return f"{can_id:04x}" if can_id <= 0xFFFF else f"{can_id:08x}"


def encode_id_bits(can_id: int) -> np.ndarray:
    """Return the 29-bit representation of ``can_id`` as a uint8 row, MSB first.

    Index 0 holds the 2**28 bit and index 28 the 2**0 bit, so an 11-bit
    CAN 2.0A identifier ends up zero-extended in the high-order positions.
    """
    check_can_id(can_id)
    return ((can_id >> np.arange(ID_BITS - 1, -1, -1)) & 1).astype(np.uint8)


def encode_ids(can_ids) -> np.ndarray:
    """Vectorized :func:`encode_id_bits`: ``(n,)`` IDs to an ``(n, 29)`` bit matrix."""
    ids = np.asarray(can_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() > MAX_ID):
        raise RangeError(f"CAN IDs must fit in {ID_BITS} bits")
    return ((ids[..., None] >> np.arange(ID_BITS - 1, -1, -1)) & 1).astype(np.uint8)


def decode_id_bits(bits) -> int:
    """Inverse of :func:`encode_id_bits`."""
    row = np.asarray(bits)
    if row.shape != (ID_BITS,) or not np.isin(row, (0, 1)).all():
        raise RangeError(f"expected {ID_BITS} binary values, got shape {row.shape}")
    return int(row.astype(np.int64) @ _BIT_WEIGHTS)


def parse_hcrl_record(line: str) -> CanMessage:
    """Parse one line of an HCRL car-hacking CSV file.

    Raises:
        FormatError: wrong number of fields for the DLC, bad flag, bad number.
    """
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) < 4:
        raise FormatError(f"too few fields ({len(fields)})")
    try:
        timestamp = float(fields[0])
        can_id = parse_hex_id(fields[1])
        dlc = int(fields[2])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    if not 0 <= dlc <= MAX_DLC:
        raise FormatError(f"DLC {dlc} outside 0..{MAX_DLC}")
    payload = fields[3:-1]
    if len(payload) != dlc:
        raise FormatError(f"DLC says {dlc} bytes but {len(payload)} present")
    try:
        data = bytes(int(b, 16) for b in payload)
    except ValueError as exc:
        raise FormatError(f"bad data byte in {payload}") from exc
    if any(len(b) > 2 for b in payload):
        raise FormatError(f"data byte wider than one octet in {payload}")
    flag_text = fields[-1].upper()
    if flag_text == "R":
        flag = MessageFlag.NORMAL
    elif flag_text == "T":
        flag = MessageFlag.INJECTED
    else:
        raise FormatError(f"unknown flag {fields[-1]!r}")
    return CanMessage(timestamp, can_id, data, flag)


def format_hcrl_record(msg: CanMessage) -> str:
    parts = [f"{msg.timestamp:.6f}", format_hex(msg.can_id), str(msg.dlc)]
    parts.extend(f"{b:02x}" for b in msg.data)
    parts.append(msg.flag.value)
    return ",".join(parts)


def iter_records(
    lines: Iterable[str], *, strict: bool = True, errors: list | None = None
) -> Iterator[CanMessage]:
    """Parse an iterable of HCRL lines, skipping blanks.

    In strict mode the first malformed line raises :class:`FormatError` with its
    line number. Otherwise bad lines are logged, appended to ``errors`` when a
    list is given, and skipped.
    """
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield parse_hcrl_record(line)
        except FormatError as exc:
            err = FormatError(str(exc), line=lineno)
            if strict:
                raise err from exc
            log.warning("skipping malformed record: %s", err)
            if errors is not None:
                errors.append(err)


def read_log(
    path: str | Path, *, strict: bool = True, errors: list | None = None
) -> list[CanMessage]:
    """Read an HCRL CSV log into a list of messages in file order.

    Args:
        path: log file, one record per line.
        strict: abort on the first malformed line (default). When False,
            malformed lines are skipped and collected into ``errors``.
        errors: optional list receiving a :class:`FormatError` per skipped line.
    """
    try:
        with open(path, encoding="ascii", errors="replace") as fh:
            return list(iter_records(fh, strict=strict, errors=errors))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def write_log(messages: Iterable[CanMessage], path: str | Path) -> int:
    """Write messages as HCRL CSV; returns the number of records written."""
    n = 0
    try:
        with open(path, "w", encoding="ascii") as fh:
            for msg in messages:
                fh.write(format_hcrl_record(msg))
                fh.write("\n")
                n += 1
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return n
