"""Canonical binary encoding primitives.

Every record that gets signed, hashed, or sent over a wire is serialized
through these helpers so the byte layout is fixed: integers are big-endian
fixed width, byte strings and UTF-8 strings are length-prefixed with a u32.
Field order is defined by each record's encode function and never varies.
"""

from __future__ import annotations

import io
import struct


class CodecError(ValueError):
    """Raised on malformed or truncated canonical encodings."""


class Writer:
    """Accumulates a canonical byte encoding."""

    def __init__(self) -> None:
        self._buf = io.BytesIO()

    def u8(self, value: int) -> None:
        if not 0 <= value <= 0xFF:
            raise CodecError(f"u8 out of range: {value}")
        self._buf.write(struct.pack(">B", value))

    def u32(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFF:
            raise CodecError(f"u32 out of range: {value}")
        self._buf.write(struct.pack(">I", value))

    def u64(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
            raise CodecError(f"u64 out of range: {value}")
        self._buf.write(struct.pack(">Q", value))

    def boolean(self, value: bool) -> None:
        self.u8(1 if value else 0)

    def raw(self, data: bytes) -> None:
        """Append bytes with no length prefix (fixed-width fields only)."""
        self._buf.write(data)

    def bytes_(self, data: bytes) -> None:
        self.u32(len(data))
        self._buf.write(data)

    def string(self, text: str) -> None:
        self.bytes_(text.encode("utf-8"))

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class Reader:
    """Decodes a canonical byte encoding produced by :class:`Writer`."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise CodecError("truncated encoding")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def boolean(self) -> bool:
        v = self.u8()
        if v not in (0, 1):
            raise CodecError(f"invalid boolean byte: {v}")
        return v == 1

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def bytes_(self) -> bytes:
        n = self.u32()
        return self._take(n)

    def string(self) -> str:
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("invalid utf-8 in string field") from exc

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise CodecError(f"{self.remaining()} trailing bytes after record")
