"""Deterministic digests of parameter groups."""

from typing import Mapping

import mmh3
import numpy as np


def digest_arrays(arrays: Mapping[str, np.ndarray], seed: int = 0) -> str:
    """128-bit murmur hash over names, shapes and little-endian values."""
    chunks = []
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name], dtype="<f8")
        chunks.append(name.encode("utf-8"))
        chunks.append(np.asarray(array.shape, dtype="<u4").tobytes())
        chunks.append(array.tobytes())
    return mmh3.hash_bytes(b"".join(chunks), seed).hex()
