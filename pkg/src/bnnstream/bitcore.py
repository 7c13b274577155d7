"""Bit-packed bipolar vectors and matrices.

Element ``i`` of a vector lives at bit ``i`` of the packed storage (little-endian
bit order, 64-bit words). A set bit encodes +1, a cleared bit encodes -1.
Padding bits past ``length`` are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

WORD_BITS = 64


def n_words(length: int) -> int:
    return (length + WORD_BITS - 1) // WORD_BITS


def _tail_mask(length: int) -> np.uint64:
    rem = length % WORD_BITS
    if rem == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << rem) - 1)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a ``(..., L)`` 0/1 array into ``(..., ceil(L/64))`` uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    length = bits.shape[-1]
    nw = n_words(length)
    pad = nw * WORD_BITS - length
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed).view("<u8")
    return words.astype(np.uint64, copy=False).reshape(bits.shape[:-1] + (nw,))


def unpack_bits(words: np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a bool array of trailing size ``length``."""
    words = np.ascontiguousarray(words, dtype="<u8")
    raw = words.view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :length].astype(bool)


def masked_xnor(w_words: np.ndarray, a_words: np.ndarray, length: int) -> np.ndarray:
    """XNOR of packed words with the padding bits cleared again."""
    out = ~(w_words ^ a_words)
    if length % WORD_BITS:
        out[..., -1] &= _tail_mask(length)
    return out


def popcount_words(words: np.ndarray) -> np.ndarray:
    """Sum of set bits over the last axis."""
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class BipolarBitVector:
    length: int
    bits: np.ndarray  # uint64 words

    def __post_init__(self):
        if self.length < 0:
            raise DimensionError("negative length")
        words = np.array(self.bits, dtype=np.uint64).reshape(-1)
        if words.size != n_words(self.length):
            raise DimensionError(
                f"{words.size} words cannot hold exactly {self.length} bits"
            )
        if words.size:
            words[-1] &= _tail_mask(self.length)
        words.flags.writeable = False
        object.__setattr__(self, "bits", words)

    @classmethod
    def from_bits(cls, bits) -> "BipolarBitVector":
        bits = np.asarray(bits, dtype=bool).reshape(-1)
        return cls(bits.size, pack_bits(bits))

    @classmethod
    def zeros(cls, length: int) -> "BipolarBitVector":
        return cls(length, np.zeros(n_words(length), dtype=np.uint64))

    @classmethod
    def ones(cls, length: int) -> "BipolarBitVector":
        return cls(length, np.full(n_words(length), 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.bits, self.length)

    def complement(self) -> "BipolarBitVector":
        return BipolarBitVector(self.length, ~self.bits)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not -self.length <= i < self.length:
            raise IndexError(i)
        i %= self.length
        return int((int(self.bits[i // WORD_BITS]) >> (i % WORD_BITS)) & 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BipolarBitVector):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.length, self.bits.tobytes()))

    def __repr__(self) -> str:
        shown = "".join(str(int(b)) for b in self.to_bits()[:32])
        more = "..." if self.length > 32 else ""
        return f"BipolarBitVector({self.length}, {shown}{more})"


def pack(values: Iterable[int]) -> BipolarBitVector:
    """Pack a sequence of +1/-1 values."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values)
    arr = arr.reshape(-1)
    if arr.size and not np.all((arr == 1) | (arr == -1)):
        bad = arr[(arr != 1) & (arr != -1)][0]
        raise ValueError(f"bipolar values must be +1 or -1, got {bad!r}")
    return BipolarBitVector.from_bits(arr == 1)


def unpack(v: BipolarBitVector) -> np.ndarray:
    """Return the vector as an int8 array of +1/-1."""
    return np.where(v.to_bits(), 1, -1).astype(np.int8)


def popcount(v: BipolarBitVector) -> int:
    return int(popcount_words(v.bits))


def xnor_popcount(w: BipolarBitVector, a: BipolarBitVector) -> int:
    """Number of positions where ``w`` and ``a`` agree.

    The bipolar dot product is ``2 * xnor_popcount(w, a) - len(w)``.
    """
    if w.length != a.length:
        raise DimensionError(f"length mismatch: {w.length} vs {a.length}")
    return int(popcount_words(masked_xnor(w.bits, a.bits, w.length)))


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """X x Y bipolar matrix; each row is packed like a :class:`BipolarBitVector`."""

    rows: int
    cols: int
    words: np.ndarray  # (rows, n_words(cols)) uint64

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"BitMatrix needs X, Y >= 1, got {self.rows}x{self.cols}")
        words = np.array(self.words, dtype=np.uint64)
        if words.shape != (self.rows, n_words(self.cols)):
            raise DimensionError(
                f"word array {words.shape} does not match {self.rows}x{self.cols} bits"
            )
        words[:, -1] &= _tail_mask(self.cols)
        words.flags.writeable = False
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits) -> "BitMatrix":
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise DimensionError("BitMatrix.from_bits expects a 2-D array")
        return cls(bits.shape[0], bits.shape[1], pack_bits(bits))

    @classmethod
    def from_bipolar(cls, values) -> "BitMatrix":
        values = np.asarray(values)
        if not np.all((values == 1) | (values == -1)):
            raise ValueError("bipolar matrix must contain only +1/-1")
        return cls.from_bits(values == 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def row(self, n: int) -> BipolarBitVector:
        return BipolarBitVector(self.cols, self.words[n])

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.cols)

    def to_bipolar(self) -> np.ndarray:
        return np.where(self.to_bits(), 1, -1).astype(np.int8)

    def flip_rows(self, mask: Sequence[bool]) -> "BitMatrix":
        """Negate (complement) every row whose mask entry is true."""
        mask = np.asarray(mask, dtype=bool)
        words = self.words.copy()
        words[mask] = ~words[mask]
        return BitMatrix(self.rows, self.cols, words)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.words.tobytes()))


@dataclass(frozen=True, eq=False)
class InterleavedFrame:
    """H x W image with C binary channels, stored pixel-major.

    Bit ``(r * W + c) * C + ch`` holds channel ``ch`` of pixel ``(r, c)``.
    """

    height: int
    width: int
    channels: int
    data: BipolarBitVector

    def __post_init__(self):
        if self.data.length != self.height * self.width * self.channels:
            raise DimensionError(
                f"frame {self.height}x{self.width}x{self.channels} needs "
                f"{self.height * self.width * self.channels} bits, got {self.data.length}"
            )

    @classmethod
    def from_array(cls, bits) -> "InterleavedFrame":
        """Build from an ``(H, W, C)`` boolean array."""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 3:
            raise DimensionError("expected an (H, W, C) array")
        h, w, c = bits.shape
        return cls(h, w, c, BipolarBitVector.from_bits(bits.reshape(-1)))

    def to_array(self) -> np.ndarray:
        return self.data.to_bits().reshape(self.height, self.width, self.channels)

    def pixel(self, r: int, c: int) -> BipolarBitVector:
        return BipolarBitVector.from_bits(self.to_array()[r, c])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InterleavedFrame):
            return NotImplemented
        return self.shape == other.shape and self.data == other.data


@dataclass(frozen=True, eq=False)
class FixedPointTensor:
    """Integer tensor whose elements fit a declared two's-complement (or unsigned) width."""

    values: np.ndarray
    bits: int
    signed: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int64)
        if self.bits < 1:
            raise ValueError("bit width must be positive")
        lo, hi = self.value_range(self.bits, self.signed)
        if values.size and (values.min() < lo or values.max() > hi):
            kind = "signed" if self.signed else "unsigned"
            raise OverflowError(f"values outside {kind} {self.bits}-bit range [{lo}, {hi}]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @staticmethod
    def value_range(bits: int, signed: bool = True) -> tuple[int, int]:
        if signed:
            return -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        return 0, (1 << bits) - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, FixedPointTensor):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.signed == other.signed
            and np.array_equal(self.values, other.values)
        )
