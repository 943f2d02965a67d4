"""Small helpers shared by the binary file formats.

Both on-disk formats are little-endian streams of u32 fields, length-
prefixed UTF-8 strings, and raw arrays. Files are written to a temporary
sibling and renamed into place so readers never observe half a file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CorruptLength


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write data to path via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent,
                                    prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


class ByteWriter:
    """Accumulates little-endian fields into one byte string."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def raw(self, data: bytes) -> None:
        self._buf += data

    def u32(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFF:
            raise ValueError(f"value {value} does not fit in u32")
        self._buf += struct.pack("<I", value)

    def utf8(self, text: str) -> None:
        data = text.encode("utf-8")
        self.u32(len(data))
        self._buf += data

    def f32_array(self, arr: np.ndarray) -> None:
        self._buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class ByteReader:
    """Walks a byte string, raising CorruptLength on any overrun."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def raw(self, count: int) -> bytes:
        if count < 0 or count > self.remaining:
            raise CorruptLength(
                f"need {count} bytes at offset {self._pos}, "
                f"have {self.remaining}")
        out = self._data[self._pos:self._pos + count]
        self._pos += count
        return out

    def u32(self) -> int:
        (value,) = struct.unpack("<I", self.raw(4))
        return value

    def utf8(self) -> str:
        data = self.raw(self.u32())
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptLength(f"string field is not valid UTF-8: {exc}")

    def f32_array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = self.raw(4 * count)
        return np.frombuffer(data, dtype="<f4").astype(
            np.float32).reshape(shape)

    def expect_end(self) -> None:
        if self.remaining:
            raise CorruptLength(
                f"{self.remaining} trailing bytes after the last field")
