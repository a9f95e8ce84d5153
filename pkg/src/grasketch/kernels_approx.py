"""Approximate Grassmannian kernels from sketches, plus their closed-form targets.

All estimators carry a 1/m normalisation so their values are m-independent and
the closed-form expectations are literal large-m limits.
"""

from __future__ import annotations

import math

import numpy as np

from grasketch.kernels_exact import GramMatrix
from grasketch.sketch import BitSketch, RealSketch, check_same_ensemble, pm1_dot
from grasketch.subspace import PrincipalAngles

EXPECTATION_KINDS = (
    "kappa1",
    "kappa2_k1",
    "kappa2_general_a",
    "kappa2_general_b",
    "kappa3_k1",
)

APPROX_VARIANTS = ("k1", "k2", "k2sym", "k3")


def kappa1_approx(r1: RealSketch, r2: RealSketch) -> float:
    """Real-real estimator of the Frobenius projection kernel sum cos^2(theta_i)."""
    check_same_ensemble(r1, r2)
    return float(r1.values @ r2.values) / r1.m


def kappa2_approx(s1: BitSketch, r2: RealSketch) -> float:
    """Semi-binarised estimator: binary stored sketch against a real query sketch."""
    check_same_ensemble(s1, r2)
    return float(s1.pm1() @ r2.values) / s1.m


def kappa2_symmetrised(
    r1: RealSketch, s1: BitSketch, r2: RealSketch, s2: BitSketch
) -> float:
    """Mean of the two asymmetric semi-binarised estimates; symmetric by construction."""
    return (kappa2_approx(s1, r2) + kappa2_approx(s2, r1)) / 2


def kappa3_approx(s1: BitSketch, s2: BitSketch) -> float:
    """Fully binarised estimator; value in [-1, 1]."""
    return pm1_dot(s1, s2) / s1.m


def c_k(k: int) -> float:
    """Expected Euclidean norm of a k-variate standard Gaussian vector."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    return math.sqrt(2.0) * math.exp(math.lgamma((k + 1) / 2) - math.lgamma(k / 2))


def expected_kappa(kind: str, angles: PrincipalAngles) -> float:
    """Closed-form expectation of an estimator at the given principal angles.

    kappa2_general_a is the constant c_k * sqrt(2/pi); kappa2_general_b is the
    alternative c_k * sqrt(2/pi) / k. Both reduce to 2/pi at k=1; the Monte
    Carlo harness adjudicates between them for k > 1.
    """
    theta = angles.theta
    k = angles.k
    if kind == "kappa1":
        return float(np.sum(np.cos(theta) ** 2))
    if kind == "kappa2_k1":
        _require_k1(kind, k)
        return (2 / math.pi) * float(np.cos(theta[0]) ** 2)
    if kind == "kappa3_k1":
        _require_k1(kind, k)
        return float((2 * theta[0] / math.pi - 1) ** 2)
    if kind == "kappa2_general_a":
        return c_k(k) * math.sqrt(2 / math.pi) * float(np.sum(np.cos(theta) ** 2))
    if kind == "kappa2_general_b":
        return (
            c_k(k) * math.sqrt(2 / math.pi) / k * float(np.sum(np.cos(theta) ** 2))
        )
    raise ValueError(f"unknown expectation kind {kind!r}")


def _require_k1(kind: str, k: int) -> None:
    if k != 1:
        raise ValueError(f"{kind} is defined for k=1 only, got k={k}")


def approx_gram(sketches, variant: str) -> GramMatrix:
    """Pairwise approximate kernel values.

    Inputs per variant: k1 takes RealSketches, k3 takes BitSketches, k2 and
    k2sym take (RealSketch, BitSketch) pairs. The k2 matrix is asymmetric by
    design (row = stored binary side) and stored as computed.
    """
    sketches = list(sketches)
    if not sketches:
        raise ValueError("no sketches")
    if variant not in APPROX_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {APPROX_VARIANTS}")
    count = len(sketches)
    values = np.empty((count, count))
    if variant == "k1":
        mat = np.stack([s.values for s in sketches])
        for s in sketches[1:]:
            check_same_ensemble(sketches[0], s)
        values = (mat @ mat.T) / sketches[0].m
    elif variant == "k3":
        for i in range(count):
            for j in range(i + 1):
                values[i, j] = values[j, i] = kappa3_approx(sketches[i], sketches[j])
    elif variant == "k2":
        for i in range(count):
            for j in range(count):
                values[i, j] = kappa2_approx(sketches[i][1], sketches[j][0])
    else:
        for i in range(count):
            for j in range(i + 1):
                values[i, j] = values[j, i] = kappa2_symmetrised(
                    sketches[i][0], sketches[i][1], sketches[j][0], sketches[j][1]
                )
    return GramMatrix(values, variant)
