"""Vectorized LEB128-style variable-length integers.

Each value is stored as 7-bit groups, least significant first; the high bit
of every byte except the last is set. Postings lists use this encoding for
their delta sequences, so the functions here are part of the on-disk format.
"""

from __future__ import annotations

import numpy as np

MAX_VARINT_BYTES = 10  # ceil(64 / 7)


class VarintError(ValueError):
    """Malformed varint data."""


def byte_lengths(values: np.ndarray) -> np.ndarray:
    """Encoded size in bytes of each value."""
    values = np.asarray(values, dtype=np.uint64)
    n = np.ones(values.shape, dtype=np.int64)
    for k in range(1, MAX_VARINT_BYTES):
        n += values >= (np.uint64(1) << np.uint64(7 * k))
    return n


def encode(values) -> np.ndarray:
    """Encode a uint64 array into a uint8 byte array."""
    values = np.asarray(values, dtype=np.uint64)
    if values.size == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = byte_lengths(values)
    starts = np.zeros(values.size, dtype=np.int64)
    np.cumsum(nbytes[:-1], out=starts[1:])
    out = np.zeros(int(starts[-1] + nbytes[-1]), dtype=np.uint8)
    for j in range(int(nbytes.max())):
        sel = nbytes > j
        chunk = (values[sel] >> np.uint64(7 * j)) & np.uint64(0x7F)
        cont = (nbytes[sel] - 1 > j).astype(np.uint8) << 7
        out[starts[sel] + j] = chunk.astype(np.uint8) | cont
    return out


def decode(data) -> np.ndarray:
    """Decode a byte array holding a whole number of varints."""
    values, _ = decode_with_ends(data)
    return values


def decode_with_ends(data) -> tuple[np.ndarray, np.ndarray]:
    """Decode and also return each varint's terminator byte offset.

    The terminator offsets let callers that concatenated several encoded
    sequences into one buffer split the decoded values back apart. Works
    byte-position by byte-position over the value axis, so cost scales with
    the number of values times the longest encoding actually present.
    """
    data = np.asarray(data, dtype=np.uint8)
    if data.size == 0:
        return np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64)
    ends = np.flatnonzero(data < 128)
    if ends.size == 0 or ends[-1] != data.size - 1:
        raise VarintError("unterminated varint at end of buffer")
    starts = np.empty(ends.size, dtype=np.int64)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    lengths = ends - starts
    max_extra = int(lengths.max())  # bytes beyond the first
    if max_extra >= MAX_VARINT_BYTES:
        raise VarintError("varint longer than 10 bytes")
    values = (data[starts] & np.uint8(0x7F)).astype(np.uint64)
    for j in range(1, max_extra + 1):
        sel = np.flatnonzero(lengths >= j)
        byte = (data[starts[sel] + j] & np.uint8(0x7F)).astype(np.uint64)
        values[sel] |= byte << np.uint64(7 * j)
    return values, ends
