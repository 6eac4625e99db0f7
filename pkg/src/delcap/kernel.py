"""Conditional laws of the i.i.d. and exact deletion channels.

A kernel maps each n-bit input x to a sparse probability row over the
variable-length output alphabet (all binary strings of length <= n).
Output strings are indexed by length first, then bits value:
``index(y) = 2^len(y) - 1 + bits(y)``, a bijection onto
``{0, ..., 2^(n+1) - 2}`` with ``index(empty) = 0``.

Row entries are exact subsequence counts times floating weights:

    i.i.d. model   P(y|x) = N(x,y) * (1-d)^|y| * d^(n-|y|)
    exact model    P(y|x) = N(x,y) / C(n,k)     for |y| = k, else 0

The count structure is shared by every d at fixed n, so it is built once
(vectorized keep-mask enumeration over all inputs, ~4^n work) and cached.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bitseq import BitString

DEFAULT_MAX_N = 14
EXTENDED_MAX_N = 16

IID = "iid"
EXACT = "exact"

_MAGIC = b"DELK"
_VERSION = 1
_MODEL_TAG = {IID: 0, EXACT: 1}
_TAG_MODEL = {0: IID, 1: EXACT}


@dataclass(frozen=True)
class OutputAlphabet:
    """Bijection between output strings of length <= n and dense indices."""

    n: int

    @property
    def size(self) -> int:
        return (1 << (self.n + 1)) - 1

    def index(self, y: BitString) -> int:
        if y.length > self.n:
            raise ValueError(f"output length {y.length} exceeds n={self.n}")
        return (1 << y.length) - 1 + y.bits

    def string(self, idx: int) -> BitString:
        if not 0 <= idx < self.size:
            raise ValueError(f"output index {idx} outside [0, {self.size})")
        length = (idx + 1).bit_length() - 1
        return BitString(length, idx - ((1 << length) - 1))

    def lengths(self) -> np.ndarray:
        """Length of every output index, as an int64 array of size 2^(n+1)-1."""
        idx = np.arange(self.size, dtype=np.int64)
        bounds = (np.int64(1) << np.arange(self.n + 2, dtype=np.int64)) - 1
        return np.searchsorted(bounds, idx, side="right") - 1


def _check_n(n: int, max_n: int) -> None:
    if not 1 <= n <= max_n:
        raise ValueError(f"n={n} outside supported range [1, {max_n}]")
    if max_n > EXTENDED_MAX_N:
        raise ValueError(f"max_n={max_n} exceeds hard cap {EXTENDED_MAX_N}")


def _subsequence_count_csr(n: int) -> sp.csr_matrix:
    """CSR matrix of N(x, y) over all 2^n inputs x and all outputs y.

    Keep-mask enumeration, vectorized over masks.  For every mask m and
    bit position i, a kept bit i lands at output position
    popcount(m & (2^i - 1)); the per-position contribution tables A[i]
    depend only on n, and the extracted word for input x is the sum of
    A[i] over the set bits of x.  Half-word partial sums make that one
    vector add per input.
    """
    m = 1 << n
    masks = np.arange(m, dtype=np.int64)
    pos = np.zeros(m, dtype=np.int64)
    contrib = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        sel = (masks >> i) & 1
        contrib[i] = sel << pos
        pos += sel
    base = (np.int64(1) << pos) - 1  # index offset of the kept length

    half = n // 2
    lo_tab = np.zeros((1 << half, m), dtype=np.int64)
    for v in range(1, 1 << half):
        low = (v & -v).bit_length() - 1
        lo_tab[v] = lo_tab[v & (v - 1)] + contrib[low]
    hi_tab = np.zeros((1 << (n - half), m), dtype=np.int64)
    for v in range(1, 1 << (n - half)):
        low = (v & -v).bit_length() - 1
        hi_tab[v] = hi_tab[v & (v - 1)] + contrib[half + low]

    size = (1 << (n + 1)) - 1
    indptr = np.zeros(m + 1, dtype=np.int64)
    idx_parts = []
    cnt_parts = []
    lo_mask = (1 << half) - 1
    for x in range(m):
        idx = base + lo_tab[x & lo_mask] + hi_tab[x >> half]
        row = np.bincount(idx, minlength=size)
        nz = np.flatnonzero(row)
        idx_parts.append(nz)
        cnt_parts.append(row[nz])
        indptr[x + 1] = indptr[x] + nz.size
    indices = np.concatenate(idx_parts)
    data = np.concatenate(cnt_parts).astype(np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(m, size))


@lru_cache(maxsize=3)
def _count_matrix_cached(n: int) -> sp.csr_matrix:
    return _subsequence_count_csr(n)


def subsequence_count_matrix(n: int, cache_dir: Path | None = None) -> sp.csr_matrix:
    """Shared N(x, y) count structure for input length n (memoized).

    With a cache directory, the structure is also persisted as an .npz so
    repeated CLI invocations skip the 4^n enumeration.
    """
    if cache_dir is not None:
        path = Path(cache_dir) / f"counts_n{n:02d}.npz"
        if path.exists():
            with np.load(path) as z:
                return sp.csr_matrix(
                    (z["data"], z["indices"], z["indptr"]),
                    shape=(1 << n, (1 << (n + 1)) - 1),
                )
        mat = _count_matrix_cached(n)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".npz.tmp")
        np.savez(tmp, data=mat.data, indices=mat.indices, indptr=mat.indptr)
        tmp.replace(path)
        return mat
    return _count_matrix_cached(n)


@dataclass
class ChannelKernel:
    """Row-stochastic law P(y|x), stored sparsely per input row."""

    n: int
    model: str  # IID or EXACT
    param: float | int  # deletion probability d, or kept count k
    rows: sp.csr_matrix  # shape (2^n, 2^(n+1)-1), float64
    _symmetric: bool = field(default=False, repr=False, compare=False)

    @property
    def alphabet(self) -> OutputAlphabet:
        return OutputAlphabet(self.n)

    @property
    def num_inputs(self) -> int:
        return 1 << self.n

    def row(self, x: BitString) -> dict[BitString, float]:
        """The law of the output for input x, as a string-keyed mapping."""
        if x.length != self.n:
            raise ValueError(f"input length {x.length} != n={self.n}")
        alpha = self.alphabet
        r = self.rows.getrow(x.bits)
        return {alpha.string(int(j)): float(v) for j, v in zip(r.indices, r.data)}

    def validate(self, tol: float = 1e-12) -> None:
        """Check nonnegativity and unit row sums (within tol)."""
        if self.rows.nnz and self.rows.data.min() < 0:
            raise ValueError("kernel has negative probabilities")
        sums = np.asarray(self.rows.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            raise ValueError(
                f"kernel rows do not sum to 1 within {tol:g}: "
                f"first bad input {bad[0]} (sum {sums[bad[0]]!r})"
            )


def _deletion_weights(n: int, d: float) -> np.ndarray:
    """w[j] = (1-d)^j * d^(n-j), powers built by repeated multiplication.

    Repeated multiplication from exponent 0 upward keeps d=0 and d=1 exact
    (no 0^0 ambiguity, no log/exp roundoff near the endpoints).
    """
    pow_d = np.ones(n + 1)
    pow_e = np.ones(n + 1)
    for i in range(1, n + 1):
        pow_d[i] = pow_d[i - 1] * d
        pow_e[i] = pow_e[i - 1] * (1.0 - d)
    j = np.arange(n + 1)
    return pow_e[j] * pow_d[n - j]


def _identity_rows(n: int) -> sp.csr_matrix:
    m = 1 << n
    size = (1 << (n + 1)) - 1
    cols = np.arange(m, dtype=np.int64) + (m - 1)  # index(len=n, bits=x)
    return sp.csr_matrix(
        (np.ones(m), cols, np.arange(m + 1, dtype=np.int64)), shape=(m, size)
    )


def _empty_output_rows(n: int) -> sp.csr_matrix:
    m = 1 << n
    size = (1 << (n + 1)) - 1
    return sp.csr_matrix(
        (np.ones(m), np.zeros(m, dtype=np.int64), np.arange(m + 1, dtype=np.int64)),
        shape=(m, size),
    )


def build_iid_kernel(
    n: int, d: float, max_n: int = DEFAULT_MAX_N, cache_dir: Path | None = None
) -> ChannelKernel:
    """Kernel of the channel dropping each input bit independently w.p. d."""
    _check_n(n, max_n)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"deletion probability d={d} outside [0, 1]")
    if d == 0.0:
        rows = _identity_rows(n)
    elif d == 1.0:
        rows = _empty_output_rows(n)
    else:
        counts = subsequence_count_matrix(n, cache_dir)
        w = _deletion_weights(n, d)
        lengths = OutputAlphabet(n).lengths()
        rows = counts.copy()
        rows.data = rows.data * w[lengths[rows.indices]]
    return ChannelKernel(n, IID, float(d), rows, _symmetric=True)


def build_exact_kernel(
    n: int, k: int, max_n: int = DEFAULT_MAX_N, cache_dir: Path | None = None
) -> ChannelKernel:
    """Kernel of the channel keeping a uniform k-subset of the input bits."""
    _check_n(n, max_n)
    if not 0 <= k <= n:
        raise ValueError(f"kept count k={k} outside [0, n={n}]")
    if k == n:
        rows = _identity_rows(n)
    elif k == 0:
        rows = _empty_output_rows(n)
    else:
        counts = subsequence_count_matrix(n, cache_dir)
        lengths = OutputAlphabet(n).lengths()
        keep = lengths[counts.indices] == k
        rows = sp.csr_matrix(
            (
                counts.data * keep / math.comb(n, k),
                counts.indices.copy(),
                counts.indptr.copy(),
            ),
            shape=counts.shape,
        )
        rows.eliminate_zeros()
    return ChannelKernel(n, EXACT, int(k), rows, _symmetric=True)


def length_law(kernel: ChannelKernel, x: BitString, j: int) -> float:
    """P(|output| = j | input x), by direct row summation.

    For the i.i.d. model this equals C(n,j) (1-d)^j d^(n-j) independently
    of x; the closed form is asserted in tests, not used here.
    """
    if kernel.model != IID:
        raise ValueError("length_law supports only the i.i.d. model")
    if not 0 <= j <= kernel.n:
        raise ValueError(f"j={j} outside [0, n={kernel.n}]")
    if x.length != kernel.n:
        raise ValueError(f"input length {x.length} != n={kernel.n}")
    r = kernel.rows.getrow(x.bits)
    lo = (1 << j) - 1
    hi = (1 << (j + 1)) - 1
    sel = (r.indices >= lo) & (r.indices < hi)
    return float(math.fsum(r.data[sel]))


def save_kernel(kernel: ChannelKernel, path: Path | str) -> None:
    """Serialize a kernel to the DELK cache format (see load_kernel)."""
    parts = [struct.pack("<HBB", _VERSION, _MODEL_TAG[kernel.model], kernel.n)]
    if kernel.model == IID:
        parts.append(struct.pack("<d", float(kernel.param)))
    else:
        parts.append(struct.pack("<I", int(kernel.param)))
    rows = kernel.rows
    rows.sort_indices()
    indptr = rows.indptr
    for x in range(rows.shape[0]):
        lo, hi = indptr[x], indptr[x + 1]
        idx = rows.indices[lo:hi].astype("<u4")
        val = rows.data[lo:hi].astype("<f8")
        entry = np.empty(idx.size, dtype=[("i", "<u4"), ("p", "<f8")])
        entry["i"] = idx
        entry["p"] = val
        parts.append(struct.pack("<I", idx.size))
        parts.append(entry.tobytes())
    payload = b"".join(parts)
    blob = _MAGIC + payload + struct.pack("<I", zlib.crc32(payload))
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def load_kernel(path: Path | str, max_n: int = DEFAULT_MAX_N) -> ChannelKernel:
    """Read a DELK file: magic, version u16, model u8, n u8, parameter
    (f64 d for i.i.d., u32 k for exact), then per input row a u32 entry
    count and (u32 output index, f64 probability) pairs in ascending
    index order; all little-endian, CRC-32 of the payload at the end.
    """
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic, not a kernel cache file")
    if len(blob) < 8 + 4:
        raise ValueError(f"{path}: truncated kernel file")
    payload, (crc,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise ValueError(f"{path}: checksum mismatch")
    version, tag, n = struct.unpack_from("<HBB", payload, 0)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    if tag not in _TAG_MODEL:
        raise ValueError(f"{path}: unknown model tag {tag}")
    model = _TAG_MODEL[tag]
    _check_n(n, max_n)
    off = 4
    if model == IID:
        (param,) = struct.unpack_from("<d", payload, off)
        off += 8
    else:
        (param,) = struct.unpack_from("<I", payload, off)
        off += 4
    m = 1 << n
    size = (1 << (n + 1)) - 1
    indptr = np.zeros(m + 1, dtype=np.int64)
    idx_parts = []
    val_parts = []
    entry_dt = np.dtype([("i", "<u4"), ("p", "<f8")])
    for x in range(m):
        if off + 4 > len(payload):
            raise ValueError(f"{path}: truncated kernel file")
        (cnt,) = struct.unpack_from("<I", payload, off)
        off += 4
        nbytes = cnt * entry_dt.itemsize
        if off + nbytes > len(payload):
            raise ValueError(f"{path}: truncated kernel file")
        entry = np.frombuffer(payload, dtype=entry_dt, count=cnt, offset=off)
        off += nbytes
        idx = entry["i"].astype(np.int64)
        if idx.size and (idx[-1] >= size or np.any(np.diff(idx) <= 0)):
            raise ValueError(f"{path}: row {x} indices not ascending in range")
        idx_parts.append(idx)
        val_parts.append(entry["p"].astype(np.float64))
        indptr[x + 1] = indptr[x] + cnt
    if off != len(payload):
        raise ValueError(f"{path}: trailing bytes after row data")
    rows = sp.csr_matrix(
        (np.concatenate(val_parts), np.concatenate(idx_parts), indptr),
        shape=(m, size),
    )
    param_val: float | int = float(param) if model == IID else int(param)
    return ChannelKernel(n, model, param_val, rows)
