"""Points of the Grassmannian G(k, n) and the geometry between them.

A subspace is carried as an n x k orthonormal basis; the n x n projection
matrix it defines is never materialised.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-10
SIGMA_SLACK = 1e-8  # allowed singular-value excursion outside [0, 1] before clamping

_MAGIC = b"GRSS"
_FORMAT_VERSION = 1


class DimensionError(ValueError):
    """Invalid or incompatible subspace dimensions."""


@dataclass(frozen=True, eq=False)
class Subspace:
    """An n x k orthonormal basis representing a point of G(k, n)."""

    basis: np.ndarray

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=np.float64, order="C", copy=True)
        if basis.ndim != 2:
            raise DimensionError("basis must be a 2-D array")
        n, k = basis.shape
        if k < 1 or k > n:
            raise DimensionError(f"need 1 <= k <= n, got n={n}, k={k}")
        dev = np.abs(basis.T @ basis - np.eye(k)).max()
        if dev > ORTHO_TOL:
            raise ValueError(
                f"basis columns are not orthonormal (max deviation {dev:.3e})"
            )
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def to_bytes(self) -> bytes:
        """Little-endian binary form: magic, version, n, k, column-major float64."""
        header = _MAGIC + struct.pack("<HII", _FORMAT_VERSION, self.n, self.k)
        return header + np.asfortranarray(self.basis).tobytes(order="F")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Subspace":
        if blob[:4] != _MAGIC:
            raise ValueError("not a subspace blob (bad magic)")
        version, n, k = struct.unpack_from("<HII", blob, 4)
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported subspace format version {version}")
        payload = np.frombuffer(blob, dtype="<f8", offset=14, count=n * k)
        return cls(payload.reshape((n, k), order="F"))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Subspace":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        """Human-readable export, one column per basis vector."""
        buf = io.StringIO()
        buf.write(",".join(f"v{j}" for j in range(self.k)) + "\n")
        for row in self.basis:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class PrincipalAngles:
    """The k angles between two subspaces, radians, sorted ascending in [0, pi/2]."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64, copy=True)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a nonempty 1-D array")
        if theta.min() < 0 or theta.max() > np.pi / 2 + 1e-12:
            raise ValueError("angles must lie in [0, pi/2]")
        if np.any(np.diff(theta) < 0):
            raise ValueError("angles must be sorted ascending")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def k(self) -> int:
        return self.theta.size


def _oriented_q(g: np.ndarray) -> np.ndarray:
    """Q factor of a QR decomposition with nonnegative R diagonal."""
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def random_subspace(n: int, k: int, seed: int) -> Subspace:
    """Uniform random point of G(k, n): oriented QR of an n x k Gaussian draw."""
    if k < 1 or k > n:
        raise DimensionError(f"need 1 <= k <= n, got n={n}, k={k}")
    g = np.random.default_rng(seed).standard_normal((n, k))
    return Subspace(_oriented_q(g))


def perturb_subspace(base: Subspace, sigma: float, seed: int) -> Subspace:
    """Re-orthonormalisation of basis + sigma * Gaussian noise."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    g = np.random.default_rng(seed).standard_normal(base.basis.shape)
    return Subspace(_oriented_q(base.basis + sigma * g))


def principal_angles(a: Subspace, b: Subspace) -> PrincipalAngles:
    """Angles from the SVD of the k x k basis product, cosines clamped into [0, 1]."""
    _check_compatible(a, b)
    sigma = np.linalg.svd(a.basis.T @ b.basis, compute_uv=False)
    if sigma.min() < -SIGMA_SLACK or sigma.max() > 1 + SIGMA_SLACK:
        raise AssertionError(
            f"singular values escaped [0, 1] beyond slack: [{sigma.min()}, {sigma.max()}]"
        )
    theta = np.arccos(np.clip(sigma, 0.0, 1.0))
    return PrincipalAngles(np.sort(theta))


def geodesic_distance(a: Subspace, b: Subspace) -> float:
    """Length of the shortest path on the manifold, sqrt(sum of squared angles)."""
    theta = principal_angles(a, b).theta
    return float(np.sqrt(np.sum(theta**2)))


def pair_with_angles(
    thetas, n: int, rotation_seed: int | None = None
) -> tuple[Subspace, Subspace]:
    """Construct two subspaces of G(k, n) with prescribed principal angles.

    Canonical bases: A spans e_1..e_k, B's i-th column is
    cos(theta_i) e_i + sin(theta_i) e_{k+i}; requires n >= 2k. When
    rotation_seed is given, both bases are rotated by the same random
    orthogonal matrix (angles are unchanged).
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    k = thetas.size
    if n < 2 * k:
        raise DimensionError(f"need n >= 2k to realise {k} angles, got n={n}")
    ua = np.zeros((n, k))
    ub = np.zeros((n, k))
    for i, t in enumerate(thetas):
        ua[i, i] = 1.0
        ub[i, i] = np.cos(t)
        ub[k + i, i] = np.sin(t)
    if rotation_seed is not None:
        rot = _oriented_q(
            np.random.default_rng(rotation_seed).standard_normal((n, n))
        )
        ua = rot @ ua
        ub = rot @ ub
    return Subspace(ua), Subspace(ub)


def _check_compatible(a: Subspace, b: Subspace) -> None:
    if a.n != b.n or a.k != b.k:
        raise DimensionError(
            f"incompatible subspaces: G({a.k},{a.n}) vs G({b.k},{b.n})"
        )
