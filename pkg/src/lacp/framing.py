"""Binary transport framing over ordered byte streams.

Wire layout, big-endian:

    offset  size  field
    0       4     magic  "LACP"
    4       1     version (0x01)
    5       1     class   (0x01 request, 0x02 response, 0x03 txn-control)
    6       4     body length n
    10      n     body (compact-encoded envelope text as UTF-8)

The decoder is incremental: bytes may arrive in arbitrary chunks and every
partition of a valid frame sequence reconstructs exactly the same frames.
Magic, version and size violations are fatal for the connection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BadMagic, BodyTooLarge, UnsupportedVersion

MAGIC = b"LACP"
VERSION = 0x01
HEADER_SIZE = 10
MAX_BODY = 1 << 24  # 16 MiB

CLASS_REQUEST = 0x01
CLASS_RESPONSE = 0x02
CLASS_TXN_CONTROL = 0x03

_HEADER = struct.Struct("!4sBBI")


@dataclass(frozen=True)
class Frame:
    frame_class: int
    body: bytes

    def __post_init__(self):
        if not 0 <= self.frame_class <= 0xFF:
            raise ValueError(f"frame class must fit one byte, got {self.frame_class}")


def encode_frame(frame: Frame) -> bytes:
    if len(frame.body) > MAX_BODY:
        raise BodyTooLarge(len(frame.body), MAX_BODY)
    return _HEADER.pack(MAGIC, VERSION, frame.frame_class, len(frame.body)) + frame.body


class FrameDecoder:
    """Stateful incremental decoder for one connection.

    feed() consumes a chunk and returns every frame completed by it;
    unconsumed bytes are buffered. Errors poison the decoder: framing
    cannot be resynchronized after a malformed header.
    """

    def __init__(self):
        self._buffer = bytearray()
        self._failed: Exception | None = None

    @property
    def residual(self) -> bytes:
        return bytes(self._buffer)

    def feed(self, data: bytes) -> list[Frame]:
        if self._failed is not None:
            raise self._failed
        self._buffer.extend(data)
        frames: list[Frame] = []
        while True:
            frame = self._try_parse_one()
            if frame is None:
                return frames
            frames.append(frame)

    def _fail(self, exc: Exception):
        self._failed = exc
        raise exc

    def _try_parse_one(self) -> Frame | None:
        buf = self._buffer
        # fail fast on a bad preamble, before the full header arrives
        if len(buf) >= 4:
            if bytes(buf[:4]) != MAGIC:
                self._fail(BadMagic(f"expected {MAGIC!r}, got {bytes(buf[:4])!r}"))
        elif buf and not MAGIC.startswith(bytes(buf)):
            self._fail(BadMagic(f"expected prefix of {MAGIC!r}, got {bytes(buf)!r}"))
        if len(buf) >= 5 and buf[4] != VERSION:
            self._fail(UnsupportedVersion(buf[4]))
        if len(buf) < HEADER_SIZE:
            return None
        _, _, frame_class, length = _HEADER.unpack_from(buf)
        if length > MAX_BODY:
            self._fail(BodyTooLarge(length, MAX_BODY))
        if len(buf) < HEADER_SIZE + length:
            return None
        body = bytes(buf[HEADER_SIZE:HEADER_SIZE + length])
        del buf[:HEADER_SIZE + length]
        return Frame(frame_class=frame_class, body=body)


def decode_frames(data: bytes) -> tuple[list[Frame], bytes]:
    """One-shot decode: (complete frames, residual partial-frame bytes)."""
    decoder = FrameDecoder()
    frames = decoder.feed(data)
    return frames, decoder.residual
