"""Rank-one-projection sketches of subspaces and their sign-binarised form.

Feature i of an ensemble draws its Gaussian pair (a_i, b_i) purely from
(master_seed, i): features are grouped into fixed-size blocks and block j is
generated from an independent child seed (master_seed, j), so sketches are
reproducible under any parallel schedule and independent of the requested m.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from grasketch.subspace import Subspace

_BLOCK = 1024  # features per generation block
_MAGIC = b"GSKT"
_FORMAT_VERSION = 1
_KIND_REAL = 0
_KIND_BITS = 1

_U64 = 0xFFFFFFFFFFFFFFFF


class EnsembleMismatchError(ValueError):
    """Sketches drawn from different ensembles cannot be compared."""


def _ensemble_id(master_seed: int, m: int, n: int) -> int:
    digest = hashlib.blake2b(
        struct.pack("<QQI", master_seed & _U64, m, n), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RopEnsemble:
    """Deterministic description of m Gaussian pairs (a_i, b_i) in R^n."""

    master_seed: int
    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"need m >= 1, got {self.m}")
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        object.__setattr__(self, "master_seed", self.master_seed & _U64)

    @property
    def ensemble_id(self) -> int:
        return _ensemble_id(self.master_seed, self.m, self.n)

    @property
    def block_count(self) -> int:
        return -(-self.m // _BLOCK)

    def gaussian_block(self, block: int) -> tuple[np.ndarray, np.ndarray]:
        """Pairs (a_i, b_i) for features in block `block`, each (count, n).

        The full block is always generated and then sliced, so feature i never
        depends on m.
        """
        count = min(_BLOCK, self.m - block * _BLOCK)
        if count <= 0:
            raise IndexError(f"block {block} out of range")
        g = np.random.default_rng([self.master_seed, block]).standard_normal(
            (2, _BLOCK, self.n)
        )
        return g[0, :count], g[1, :count]

    def gaussian_pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """The single pair (a_i, b_i); reference path for tests."""
        if not 0 <= i < self.m:
            raise IndexError(f"feature {i} out of range")
        a, b = self.gaussian_block(i // _BLOCK)
        return a[i % _BLOCK], b[i % _BLOCK]


@dataclass(frozen=True, eq=False)
class RealSketch:
    """The m real rank-one-projection values of one subspace."""

    values: np.ndarray
    master_seed: int
    n: int
    k: int

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1:
            raise ValueError("sketch values must be 1-D")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def ensemble_id(self) -> int:
        return _ensemble_id(self.master_seed, self.m, self.n)

    def prefix(self, m: int) -> "RealSketch":
        """First m features; identical to sketching under the smaller ensemble."""
        if not 1 <= m <= self.m:
            raise ValueError(f"prefix length {m} out of range 1..{self.m}")
        return RealSketch(self.values[:m], self.master_seed, self.n, self.k)


@dataclass(frozen=True, eq=False)
class BitSketch:
    """Sign bits of a real sketch, packed little-endian into 64-bit words."""

    words: np.ndarray
    m: int
    master_seed: int
    n: int
    k: int

    def __post_init__(self) -> None:
        words = np.array(self.words, dtype=np.uint64, copy=True)
        if words.ndim != 1 or words.size != -(-self.m // 64):
            raise ValueError("word count must be ceil(m/64)")
        tail = self.m % 64
        if tail and int(words[-1]) >> tail != 0:
            raise ValueError("padding bits beyond m must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def ensemble_id(self) -> int:
        return _ensemble_id(self.master_seed, self.m, self.n)

    def bits(self) -> np.ndarray:
        """Unpacked {0, 1} bit array of length m."""
        return np.unpackbits(
            self.words.astype("<u8").view(np.uint8), bitorder="little"
        )[: self.m]

    def pm1(self) -> np.ndarray:
        """The {-1, +1} expansion (bit 1 -> +1)."""
        return 2.0 * self.bits() - 1.0

    def prefix(self, m: int) -> "BitSketch":
        if not 1 <= m <= self.m:
            raise ValueError(f"prefix length {m} out of range 1..{self.m}")
        return _pack_bits(self.bits()[:m], m, self.master_seed, self.n, self.k)


def _pack_bits(bits: np.ndarray, m: int, master_seed: int, n: int, k: int) -> BitSketch:
    padded = np.zeros(-(-m // 64) * 64, dtype=np.uint8)
    padded[:m] = bits
    words = np.packbits(padded, bitorder="little").view("<u8").astype(np.uint64)
    return BitSketch(words, m, master_seed, n, k)


def rop_sketch(u: Subspace, ensemble: RopEnsemble) -> RealSketch:
    """values[i] = (a_i^T U)(U^T b_i), the rank-one projection of P = U U^T."""
    return rop_sketch_many([u], ensemble)[0]


def rop_sketch_many(subspaces, ensemble: RopEnsemble) -> list[RealSketch]:
    """Sketch several subspaces in one pass over the Gaussian blocks."""
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("no subspaces to sketch")
    for u in subspaces:
        if u.n != ensemble.n:
            raise ValueError(
                f"ambient mismatch: subspace has n={u.n}, ensemble n={ensemble.n}"
            )
    stacked = np.hstack([u.basis for u in subspaces])
    offsets = np.cumsum([0] + [u.k for u in subspaces])
    out = np.empty((len(subspaces), ensemble.m))
    pos = 0
    for block in range(ensemble.block_count):
        a, b = ensemble.gaussian_block(block)
        x = a @ stacked
        y = b @ stacked
        for j in range(len(subspaces)):
            lo, hi = offsets[j], offsets[j + 1]
            out[j, pos : pos + a.shape[0]] = np.einsum(
                "ik,ik->i", x[:, lo:hi], y[:, lo:hi]
            )
        pos += a.shape[0]
    return [
        RealSketch(out[j], ensemble.master_seed, ensemble.n, subspaces[j].k)
        for j in range(len(subspaces))
    ]


def binarise(sketch: RealSketch) -> BitSketch:
    """Keep only the signs; sign(0) := +1 so the bit pattern is deterministic."""
    bits = (sketch.values >= 0).astype(np.uint8)
    return _pack_bits(bits, sketch.m, sketch.master_seed, sketch.n, sketch.k)


def sign_sketch(u: Subspace, ensemble: RopEnsemble) -> BitSketch:
    """Binarised rank-one-projection sketch of a subspace."""
    return binarise(rop_sketch(u, ensemble))


def check_same_ensemble(x, y) -> None:
    if x.m != y.m:
        raise EnsembleMismatchError(f"sketch lengths differ: {x.m} vs {y.m}")
    if x.ensemble_id != y.ensemble_id:
        raise EnsembleMismatchError("sketches come from different ensembles")


def pm1_dot(x: BitSketch, y: BitSketch) -> int:
    """Dot product of the two {-1, +1} expansions via XOR + popcount."""
    check_same_ensemble(x, y)
    differing = int(np.bitwise_count(x.words ^ y.words).sum())
    return x.m - 2 * differing


def write_sketch(path, sketch) -> None:
    """Binary sketch file: magic, version, kind, m, n, k, master_seed, payload."""
    if isinstance(sketch, RealSketch):
        kind, payload = _KIND_REAL, sketch.values.astype("<f8").tobytes()
    elif isinstance(sketch, BitSketch):
        kind, payload = _KIND_BITS, sketch.words.astype("<u8").tobytes()
    else:
        raise TypeError(f"not a sketch: {type(sketch).__name__}")
    header = _MAGIC + struct.pack(
        "<HBQIIQ", _FORMAT_VERSION, kind, sketch.m, sketch.n, sketch.k,
        sketch.master_seed,
    )
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_sketch(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"not a sketch file: {path}")
    version, kind, m, n, k, master_seed = struct.unpack_from("<HBQIIQ", blob, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported sketch format version {version}")
    offset = 4 + struct.calcsize("<HBQIIQ")
    if kind == _KIND_REAL:
        values = np.frombuffer(blob, dtype="<f8", offset=offset, count=m)
        return RealSketch(values, master_seed, n, k)
    if kind == _KIND_BITS:
        words = np.frombuffer(blob, dtype="<u8", offset=offset, count=-(-m // 64))
        return BitSketch(words.astype(np.uint64), m, master_seed, n, k)
    raise ValueError(f"unknown sketch kind {kind}")
