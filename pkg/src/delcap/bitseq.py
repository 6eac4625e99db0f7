"""Bit-string combinatorics for deletion-channel kernels.

Words are packed little-endian: bit ``i`` of the integer is symbol ``i``
of the string, so ``BitString.from_str("110")`` has ``bits == 0b011``.
All counting is exact integer arithmetic; the length cap of 24 keeps
keep-mask enumeration and packed words comfortably inside 64 bits
(the largest count, C(24, 12), is about 2.7e6).
"""

from __future__ import annotations

from dataclasses import dataclass

MAX_LEN = 24


@dataclass(frozen=True, order=True)
class BitString:
    """A binary word of explicit length with bits packed into an int."""

    length: int
    bits: int

    def __post_init__(self):
        if not 0 <= self.length <= MAX_LEN:
            raise ValueError(f"length {self.length} outside [0, {MAX_LEN}]")
        if not 0 <= self.bits < (1 << self.length):
            raise ValueError(f"bits {self.bits:#x} do not fit in {self.length} bits")

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        if any(c not in "01" for c in s):
            raise ValueError(f"not a binary string: {s!r}")
        bits = 0
        for i, c in enumerate(s):
            if c == "1":
                bits |= 1 << i
        return cls(len(s), bits)

    def __str__(self) -> str:
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.length))

    def __iter__(self):
        return (((self.bits >> i) & 1) for i in range(self.length))

    @property
    def empty(self) -> bool:
        return self.length == 0

    def reverse(self) -> "BitString":
        rev = 0
        for i in range(self.length):
            if (self.bits >> i) & 1:
                rev |= 1 << (self.length - 1 - i)
        return BitString(self.length, rev)

    def complement(self) -> "BitString":
        return BitString(self.length, self.bits ^ ((1 << self.length) - 1))


def subseq_count(x: BitString, y: BitString) -> int:
    """Number of index sets under which y occurs as a subsequence of x.

    Standard O(|x| * |y|) dynamic program: dp[j] counts the index sets
    matching the first j symbols of y inside the prefix of x scanned so
    far; scanning symbol x_i updates dp[j] += dp[j-1] whenever x_i == y_j.
    """
    if y.length > x.length:
        raise ValueError("output longer than input")
    dp = [0] * (y.length + 1)
    dp[0] = 1
    for i in range(x.length):
        xi = (x.bits >> i) & 1
        # descending j so each x-position is used at most once per index set
        for j in range(min(i + 1, y.length), 0, -1):
            if xi == (y.bits >> (j - 1)) & 1:
                dp[j] += dp[j - 1]
    return dp[y.length]


def subsequence_spectrum(x: BitString, k_filter: int | None = None) -> dict[BitString, int]:
    """All subsequences of x with their occurrence counts.

    Enumerates the 2^|x| keep-masks and accumulates (length, bits) keys,
    so the counts over all y sum to 2^|x| (and to C(|x|, k) when
    restricted to |y| = k).
    """
    n = x.length
    if k_filter is not None and not 0 <= k_filter <= n:
        raise ValueError(f"k_filter {k_filter} outside [0, {n}]")
    counts: dict[tuple[int, int], int] = {}
    for mask in range(1 << n):
        kept = 0
        pos = 0
        for i in range(n):
            if (mask >> i) & 1:
                if (x.bits >> i) & 1:
                    kept |= 1 << pos
                pos += 1
        key = (pos, kept)
        counts[key] = counts.get(key, 0) + 1
    out = {}
    for (length, bits), c in sorted(counts.items()):
        if k_filter is None or length == k_filter:
            out[BitString(length, bits)] = c
    return out


def canonical_class(x: BitString) -> BitString:
    """Minimum of {x, reverse, complement, reverse-complement} by bits value.

    The deletion law is invariant under jointly complementing or reversing
    input and output, so this orbit representative indexes a symmetry class.
    """
    candidates = (x, x.reverse(), x.complement(), x.reverse().complement())
    return min(candidates, key=lambda b: b.bits)
