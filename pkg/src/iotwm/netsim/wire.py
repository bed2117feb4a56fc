"""Binary frame format between devices and the gateway.

Layout (little-endian): 4-byte magic ``IOTW``, 1-byte version, u32 device
id, u64 window index, u16 sample count, then that many f64 samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ParameterError

MAGIC = b"IOTW"
VERSION = 1
HEADER = struct.Struct("<4sBIQH")
MAX_SAMPLES = 0xFFFF


@dataclass(frozen=True)
class Frame:
    device_id: int
    window_index: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype="<f8")
        if samples.ndim != 1:
            raise ParameterError("frame samples must be one-dimensional")
        if len(samples) > MAX_SAMPLES:
            raise ParameterError(f"at most {MAX_SAMPLES} samples per frame, got {len(samples)}")
        if not 0 <= self.device_id < 2 ** 32:
            raise ParameterError("device_id must fit in 32 bits")
        if not 0 <= self.window_index < 2 ** 64:
            raise ParameterError("window_index must fit in 64 bits")
        object.__setattr__(self, "samples", samples)

    @property
    def sample_count(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.device_id == other.device_id and self.window_index == other.window_index
                and self.samples.tobytes() == other.samples.tobytes())

    __hash__ = None


def encode(frame):
    head = HEADER.pack(MAGIC, VERSION, frame.device_id, frame.window_index, frame.sample_count)
    return head + frame.samples.tobytes()


def _parse_header(data):
    magic, version, device_id, window_index, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    return device_id, window_index, count


def decode(data):
    """Parse exactly one frame from ``data``."""
    data = bytes(data)
    if len(data) < HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes")
    device_id, window_index, count = _parse_header(data)
    expected = HEADER.size + 8 * count
    if len(data) != expected:
        raise FormatError(f"frame is {len(data)} bytes, header implies {expected}")
    samples = np.frombuffer(data, dtype="<f8", offset=HEADER.size, count=count)
    return Frame(device_id, window_index, samples.copy())


class FrameDecoder:
    """Incremental decoder for a byte stream carrying back-to-back frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk):
        """Add bytes and return every frame completed by them. Raises
        FormatError on a bad header; the stream cannot be resynchronised
        after that."""
        self._buf.extend(chunk)
        frames = []
        while len(self._buf) >= HEADER.size:
            _, _, count = _parse_header(self._buf)
            size = HEADER.size + 8 * count
            if len(self._buf) < size:
                break
            frames.append(decode(self._buf[:size]))
            del self._buf[:size]
        return frames

    @property
    def pending(self):
        """Bytes of an incomplete trailing frame."""
        return len(self._buf)
