"""Exact Grassmannian kernels: Frobenius projection kernel and Binet-Cauchy kernel."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from grasketch.subspace import Subspace, _check_compatible

_GRAM_MAGIC = b"GRAM"

KERNELS = ("projection", "binet_cauchy")


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """N x N matrix of pairwise kernel values."""

    values: np.ndarray
    kernel_name: str

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("Gram matrix must be square")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.values + self.values.T) / 2).min())

    def to_csv(self, ids=None) -> str:
        ids = list(ids) if ids is not None else [f"s{i}" for i in range(self.size)]
        buf = io.StringIO()
        buf.write(",".join(ids) + "\n")
        for row in self.values:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        return _GRAM_MAGIC + struct.pack("<I", self.size) + self.values.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, kernel_name: str = "projection") -> "GramMatrix":
        if blob[:4] != _GRAM_MAGIC:
            raise ValueError("not a Gram blob (bad magic)")
        (size,) = struct.unpack_from("<I", blob, 4)
        vals = np.frombuffer(blob, dtype="<f8", offset=8, count=size * size)
        return cls(vals.reshape(size, size), kernel_name)


def projection_kernel(a: Subspace, b: Subspace) -> float:
    """Frobenius inner product of the two projection matrices, sum of cos^2(theta_i)."""
    _check_compatible(a, b)
    return float(np.linalg.norm(a.basis.T @ b.basis, "fro") ** 2)


def binet_cauchy_kernel(a: Subspace, b: Subspace) -> float:
    """Squared determinant of the k x k basis product, product of cos^2(theta_i)."""
    _check_compatible(a, b)
    return float(np.linalg.det(a.basis.T @ b.basis) ** 2)


def gram_matrix(data, kernel_name: str) -> GramMatrix:
    """Assemble pairwise kernel values; computed on the lower triangle, mirrored."""
    data = list(data)
    if not data:
        raise ValueError("empty subspace list")
    if kernel_name not in KERNELS:
        raise ValueError(f"unknown kernel {kernel_name!r}, expected one of {KERNELS}")
    n, k = data[0].n, data[0].k
    for i, s in enumerate(data):
        if s.n != n or s.k != k:
            raise ValueError(
                f"heterogeneous dimensions: sample 0 is G({k},{n}), "
                f"sample {i} is G({s.k},{s.n})"
            )
    count = len(data)
    # stacked basis products: prods[i, j] = U_i^T U_j, shape (N, k, N, k)
    stacked = np.stack([s.basis for s in data])
    prods = np.tensordot(stacked, stacked, axes=([1], [1]))
    if kernel_name == "projection":
        values = np.einsum("ikjl,ikjl->ij", prods, prods)
    else:
        values = np.linalg.det(prods.transpose(0, 2, 1, 3)) ** 2
    lower = np.tril(values)
    values = lower + np.tril(lower, -1).T
    return GramMatrix(values, kernel_name)
