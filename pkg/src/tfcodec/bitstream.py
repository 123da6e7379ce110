"""VOC1 wire format.

Layout (multi-byte fields big-endian)::

    offset  size  field
    0       4     magic b"VOC1"
    4       1     version (1)
    5       2     sample_rate (24000)
    7       1     hop in samples (240)
    8       1     n_layers (1..6)
    9       1     bits_per_index (10)
    10      2     reserved, zero

followed by one packed frame per 10 ms. A frame holds ``n_layers`` 10-bit
indices, MSB first, zero-padded to a whole number of bytes, so frames can
be located, dropped or stripped without touching their neighbours.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    FieldRangeError,
    TruncatedStreamError,
    UnsupportedVersionError,
    UsageError,
)

MAGIC = b"VOC1"
VERSION = 1
HEADER_SIZE = 12
MAX_LAYERS = 6
_HEADER = struct.Struct(">4sBHBBBH")


@dataclass(frozen=True)
class StreamHeader:
    n_layers: int = MAX_LAYERS
    sample_rate: int = 24000
    hop: int = 240
    bits_per_index: int = 10
    version: int = VERSION

    @property
    def frame_bytes(self) -> int:
        return math.ceil(self.n_layers * self.bits_per_index / 8)

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    @property
    def information_bps(self) -> float:
        """Bits of code information per second (excludes alignment padding)."""
        return self.n_layers * self.bits_per_index * self.frame_rate

    @property
    def wire_bps(self) -> float:
        """Payload bits per second including per-frame padding."""
        return self.frame_bytes * 8 * self.frame_rate

    def to_bytes(self) -> bytes:
        return _HEADER.pack(
            MAGIC, self.version, self.sample_rate, self.hop, self.n_layers, self.bits_per_index, 0
        )


def _validate(header: StreamHeader, offset_base=0):
    if not 1 <= header.n_layers <= MAX_LAYERS:
        raise FieldRangeError(f"n_layers {header.n_layers} outside [1, {MAX_LAYERS}]", offset_base + 8)
    if header.bits_per_index != 10:
        raise FieldRangeError(f"bits_per_index must be 10, got {header.bits_per_index}", offset_base + 9)
    if header.sample_rate != 24000:
        raise FieldRangeError(f"sample_rate must be 24000, got {header.sample_rate}", offset_base + 5)
    if header.hop != 240:
        raise FieldRangeError(f"hop must be 240, got {header.hop}", offset_base + 7)


def pack_frame(indices, bits: int = 10) -> bytes:
    value = 0
    for idx in indices:
        value = (value << bits) | int(idx)
    n_bits = len(indices) * bits
    n_bytes = math.ceil(n_bits / 8)
    return (value << (8 * n_bytes - n_bits)).to_bytes(n_bytes, "big")


def unpack_frame(data: bytes, n_layers: int, bits: int = 10) -> list:
    value = int.from_bytes(data, "big") >> (8 * len(data) - n_layers * bits)
    mask = (1 << bits) - 1
    return [(value >> (bits * (n_layers - 1 - i))) & mask for i in range(n_layers)]


def pack(codes, header: StreamHeader) -> bytes:
    """Serialize a (T, n_layers) index array behind a VOC1 header."""
    _validate(header)
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != header.n_layers:
        raise UsageError(f"codes of shape {codes.shape} do not match header n_layers={header.n_layers}")
    limit = 1 << header.bits_per_index
    if codes.size and (codes.min() < 0 or codes.max() >= limit):
        raise UsageError(f"code indices must lie in [0, {limit})")
    parts = [header.to_bytes()]
    parts.extend(pack_frame(row, header.bits_per_index) for row in codes.tolist())
    return b"".join(parts)


def read_header(data: bytes) -> StreamHeader:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", 0)
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(f"stream header needs {HEADER_SIZE} bytes, got {len(data)}", len(data))
    _, version, rate, hop, n_layers, bits, reserved = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported stream version {version}", 4)
    if reserved != 0:
        raise FieldRangeError("reserved header bytes must be zero", 10)
    header = StreamHeader(n_layers=n_layers, sample_rate=rate, hop=hop, bits_per_index=bits, version=version)
    _validate(header)
    return header


def unpack(data: bytes):
    """Parse a VOC1 stream into ``(header, codes)``; codes is (T, n_layers)."""
    data = bytes(data)
    header = read_header(data)
    payload = len(data) - HEADER_SIZE
    n_frames, rest = divmod(payload, header.frame_bytes)
    if rest:
        offset = HEADER_SIZE + n_frames * header.frame_bytes
        raise TruncatedStreamError(
            f"frame {n_frames} truncated: {rest} of {header.frame_bytes} bytes present",
            offset,
            frame_index=n_frames,
        )
    codes = np.zeros((n_frames, header.n_layers), dtype=np.int64)
    fb = header.frame_bytes
    for t in range(n_frames):
        start = HEADER_SIZE + t * fb
        codes[t] = unpack_frame(data[start : start + fb], header.n_layers, header.bits_per_index)
    return header, codes


def strip_layers(data: bytes, keep: int) -> bytes:
    """Re-pack a stream keeping only the first ``keep`` indices per frame."""
    header, codes = unpack(data)
    if not 1 <= keep <= header.n_layers:
        raise UsageError(f"keep must be in [1, {header.n_layers}], got {keep}")
    if keep == header.n_layers:
        return bytes(data)
    stripped = StreamHeader(
        n_layers=keep, sample_rate=header.sample_rate, hop=header.hop,
        bits_per_index=header.bits_per_index, version=header.version,
    )
    return pack(codes[:, :keep], stripped)
