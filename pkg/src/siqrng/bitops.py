"""Bit-string helpers: canonical arrays, symbol serialization, packed files.

Conventions used everywhere in this package:

* A bit string in memory is a 1-D ``numpy.uint8`` array of 0/1 values.
* Packed bit files are raw bytes in little-endian bit order: logical bit
  ``k`` is stored in byte ``k // 8`` at bit position ``k % 8``.  A file of
  ``ceil(n / 8)`` bytes therefore holds ``n`` bits plus zero padding.
* A symbol with value ``v`` in dimension ``d = 2**b`` serializes to ``b``
  bits, most significant bit first.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import SerializationError

BitsLike = Union[str, bytes, Iterable[int], np.ndarray]


def as_bits(bits: BitsLike) -> np.ndarray:
    """Coerce a bit string ('0101', list, array) to a uint8 0/1 array."""
    if isinstance(bits, np.ndarray):
        arr = bits.astype(np.uint8, copy=False)
    elif isinstance(bits, str):
        arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    elif isinstance(bits, bytes):
        arr = np.frombuffer(bits, dtype=np.uint8).copy()
    else:
        arr = np.asarray(list(bits), dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit strings must be one-dimensional")
    if arr.size and arr.max(initial=0) > 1:
        raise ValueError("bit strings may only contain 0 and 1")
    return arr


def bits_to_str(bits: BitsLike) -> str:
    arr = as_bits(bits)
    return (arr + ord("0")).astype(np.uint8).tobytes().decode("ascii")


def bits_per_symbol(dimension: int) -> int:
    """Number of bits one outcome symbol carries; dimension must be 2**b."""
    if dimension < 2 or dimension & (dimension - 1):
        raise SerializationError(
            f"dimension {dimension} is not a power of two; symbols cannot be "
            "serialized to a bit string"
        )
    return dimension.bit_length() - 1


def symbols_to_bits(symbols: Iterable[int], dimension: int) -> np.ndarray:
    """Serialize outcome symbols to bits, big-endian within each symbol."""
    width = bits_per_symbol(dimension)
    syms = np.asarray(symbols, dtype=np.int64)
    if syms.size and (syms.min() < 0 or syms.max() >= dimension):
        raise SerializationError("symbol out of range for dimension")
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((syms[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)


def pack_bits(bits: BitsLike) -> bytes:
    return np.packbits(as_bits(bits), bitorder="little").tobytes()


def unpack_bits(data: bytes, n_bits: int | None = None) -> np.ndarray:
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if n_bits is not None:
        if n_bits > arr.size:
            raise ValueError(f"requested {n_bits} bits but data holds {arr.size}")
        arr = arr[:n_bits]
    return arr


def write_bit_file(path: str | Path, bits: BitsLike) -> int:
    """Write bits to a packed file; returns the number of bits written."""
    arr = as_bits(bits)
    Path(path).write_bytes(pack_bits(arr))
    return int(arr.size)


def read_bit_file(path: str | Path, n_bits: int | None = None) -> np.ndarray:
    return unpack_bits(Path(path).read_bytes(), n_bits)
