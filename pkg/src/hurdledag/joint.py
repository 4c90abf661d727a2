"""Multivariate zero-inflated Gaussian joint law with pairwise interactions.

The unnormalized density over m coordinates is

    f(y) = exp(1'A1 + 1'By - y'Ky/2)

against the product measure (Lebesgue + atom at 0)^m, where ``1`` is the
vector of nonzero indicators of y, A captures indicator-indicator
interactions (only its symmetric part is identified), B indicator-value
interactions, and K is a positive definite precision.

The normalizer decomposes over the 2^m zero patterns: the pattern with
nonzero set S contributes a closed-form Gaussian integral over the S
coordinates, so exact normalization is practical for small m.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .conditionals import CanonicalConditional
from .poly import HurdlePolynomial, Term

__all__ = ["HurdleJoint", "joint_density", "joint_normalizer", "conditional_from_joint"]


@dataclass(frozen=True)
class HurdleJoint:
    """Interaction matrices (A, B, K); A is symmetrized on construction."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        K = np.asarray(self.K, dtype=float)
        m = A.shape[0]
        if A.shape != (m, m) or B.shape != (m, m) or K.shape != (m, m):
            raise ValueError("A, B, K must be square matrices of one size")
        if not np.allclose(K, K.T):
            raise ValueError("K must be symmetric")
        np.linalg.cholesky(K)  # raises if not positive definite
        object.__setattr__(self, "A", (A + A.T) / 2.0)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", (K + K.T) / 2.0)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def to_json_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "K": self.K.tolist()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "HurdleJoint":
        return cls(np.array(obj["A"]), np.array(obj["B"]), np.array(obj["K"]))


def joint_density(joint: HurdleJoint, y: np.ndarray) -> float:
    """Unnormalized density exp(1'A1 + 1'By - y'Ky/2) at one point."""
    y = np.asarray(y, dtype=float)
    ind = (y != 0.0).astype(float)
    expo = ind @ joint.A @ ind + ind @ joint.B @ y - 0.5 * y @ joint.K @ y
    return float(np.exp(expo))


def joint_normalizer(joint: HurdleJoint, max_m: int = 4) -> float:
    """Exact normalizer: sum of per-zero-pattern Gaussian integrals.

    The pattern with nonzero coordinate set S contributes
    ``exp(sum A[S,S]) * (2 pi)^{|S|/2} det(K[S,S])^{-1/2} * exp(b' K[S,S]^{-1} b / 2)``
    with ``b = column sums of B[S, S]``.  Cost is 2^m patterns; refuse large m.
    """
    m = joint.m
    if m > max_m:
        raise ValueError(f"normalizer requires m <= {max_m}, got {m}")
    total = 0.0
    for r in range(m + 1):
        for S in itertools.combinations(range(m), r):
            total += _pattern_mass(joint, S)
    return total


def _pattern_mass(joint: HurdleJoint, S: tuple[int, ...]) -> float:
    """Unnormalized mass of the zero pattern whose nonzero set is S."""
    if not S:
        return 1.0
    idx = np.array(S)
    A_SS = joint.A[np.ix_(idx, idx)]
    K_SS = joint.K[np.ix_(idx, idx)]
    b = joint.B[np.ix_(idx, idx)].sum(axis=0)
    L = np.linalg.cholesky(K_SS)
    half_logdet = np.log(np.diag(L)).sum()
    w = np.linalg.solve(L, b)
    expo = A_SS.sum() + 0.5 * w @ w + 0.5 * len(S) * math.log(2.0 * math.pi) - half_logdet
    return float(np.exp(expo))


def pattern_probability(joint: HurdleJoint, S: tuple[int, ...], max_m: int = 4) -> float:
    """Probability that exactly the coordinates in S are nonzero."""
    return _pattern_mass(joint, tuple(sorted(S))) / joint_normalizer(joint, max_m=max_m)


def conditional_from_joint(joint: HurdleJoint, i: int) -> CanonicalConditional:
    """Conditional law of coordinate i given all others, read off the exponent.

    Collecting the terms of the joint exponent that involve y_i gives degree-1
    polynomials in the other coordinates:

        alpha(z) = A[i,i] + sum_j (A[i,j]+A[j,i]) 1{z_j} + sum_j B[i,j] z_j
        beta(z)  = B[i,i] + sum_j B[j,i] 1{z_j} - sum_j K[i,j] z_j
        k        = K[i,i]

    (A is stored symmetrized, so A[i,j]+A[j,i] = 2 A[i,j].)
    """
    m = joint.m
    if not 0 <= i < m:
        raise IndexError(f"node index {i} out of range for m={m}")
    others = [j for j in range(m) if j != i]
    scope = tuple(others)

    a_terms = []
    b_terms = []
    for j in others:
        ca = 2.0 * joint.A[i, j]
        if ca != 0.0:
            a_terms.append(Term(ca, (), (j,)))
        if joint.B[i, j] != 0.0:
            a_terms.append(Term(joint.B[i, j], ((j, 1),), ()))
        if joint.B[j, i] != 0.0:
            b_terms.append(Term(joint.B[j, i], (), (j,)))
        if joint.K[i, j] != 0.0:
            b_terms.append(Term(-joint.K[i, j], ((j, 1),), ()))

    alpha = HurdlePolynomial(float(joint.A[i, i]), tuple(a_terms), scope)
    beta = HurdlePolynomial(float(joint.B[i, i]), tuple(b_terms), scope)
    return CanonicalConditional(alpha, beta, float(joint.K[i, i]))
