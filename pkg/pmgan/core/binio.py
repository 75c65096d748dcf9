"""Little-endian binary records shared by the dataset and checkpoint formats.

Layout primitives::

    header   magic (4 bytes) | version u32
    json     length u32 | orjson bytes
    array    ndim u32 | dims u32 * ndim | float64 LE * prod(dims)
    named    name length u32 | utf-8 name | array
"""

import struct
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np
import orjson

from pmgan.core.errors import FormatError, TruncatedFileError, VersionMismatchError

_U32 = struct.Struct("<I")


class BinaryWriter:
    """Sequential writer over an open binary stream."""

    def __init__(self, stream: BinaryIO):
        self.stream = stream

    def header(self, magic: bytes, version: int) -> None:
        self.stream.write(magic)
        self.u32(version)

    def u32(self, value: int) -> None:
        self.stream.write(_U32.pack(value))

    def json(self, payload: Any) -> None:
        blob = orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)
        self.u32(len(blob))
        self.stream.write(blob)

    def array(self, values: np.ndarray) -> None:
        values = np.ascontiguousarray(values, dtype="<f8")
        self.u32(values.ndim)
        for dim in values.shape:
            self.u32(dim)
        self.stream.write(values.tobytes())

    def named_array(self, name: str, values: np.ndarray) -> None:
        encoded = name.encode("utf-8")
        self.u32(len(encoded))
        self.stream.write(encoded)
        self.array(values)


class BinaryReader:
    """Sequential reader that turns short reads into ``TruncatedFileError``."""

    def __init__(self, stream: BinaryIO, path: Path):
        self.stream = stream
        self.path = str(path)

    def _read(self, size: int, what: str) -> bytes:
        blob = self.stream.read(size)
        if len(blob) != size:
            raise TruncatedFileError(
                f"{self.path}: truncated while reading {what} "
                f"(wanted {size} bytes, got {len(blob)})"
            )
        return blob

    def header(self, magic: bytes, version: int) -> int:
        found = self.stream.read(len(magic))
        if found != magic:
            if len(found) < len(magic) and magic.startswith(found):
                raise TruncatedFileError(f"{self.path}: truncated inside magic bytes")
            raise FormatError(self.path, magic, found)
        found_version = self.u32("format version")
        if found_version != version:
            raise VersionMismatchError(self.path, version, found_version)
        return found_version

    def u32(self, what: str = "integer") -> int:
        return _U32.unpack(self._read(_U32.size, what))[0]

    def json(self, what: str = "json block") -> Any:
        length = self.u32(f"{what} length")
        try:
            return orjson.loads(self._read(length, what))
        except orjson.JSONDecodeError as exc:
            raise FormatError(self.path, b"json", str(exc).encode()) from exc

    def array(self, what: str = "array") -> np.ndarray:
        ndim = self.u32(f"{what} rank")
        shape = tuple(self.u32(f"{what} shape") for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        blob = self._read(8 * count, what)
        return np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(shape)

    def named_array(self) -> tuple[str, np.ndarray]:
        length = self.u32("name length")
        raw = self._read(length, "name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(self.path, b"utf-8 name", raw[:32]) from exc
        return name, self.array(name)

    def expect_end(self) -> None:
        extra = self.stream.read(1)
        if extra:
            raise FormatError(self.path, b"<end of file>", extra)
