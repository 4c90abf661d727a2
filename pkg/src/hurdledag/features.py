"""Design-matrix expansion for node-conditional fits.

Columns are the monomial basis of polynomials in parent values and
indicators up to a total degree: every product of per-parent factors where
each parent contributes nothing, an indicator, or a power y^d, with total
degree (sum of powers plus indicator count) at most D.  Optional covariate
columns enter as plain linear value columns and are never interacted.

Constant and collinear columns are dropped by an order-preserving
Gram-Schmidt pass (earlier columns win; the intercept is always first), and
the surviving descriptors map coefficient vectors back to polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .poly import HurdlePolynomial, Term

__all__ = ["FeatureMatrix", "expand_features", "monomial_descriptors"]

DROP_RTOL = 1e-10


@dataclass(frozen=True)
class FeatureMatrix:
    """Expanded design matrix plus the term descriptor of every column.

    ``columns[j]`` describes column j as a unit-coefficient Term; column 0 is
    always the intercept (empty factor map).  ``dropped`` records descriptors
    eliminated as constant or collinear.
    """

    matrix: np.ndarray
    columns: tuple[Term, ...]
    dropped: tuple[Term, ...]
    scope: tuple[int, ...]
    degree: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    def to_polynomial(self, coefs: np.ndarray) -> HurdlePolynomial:
        """Map a coefficient vector over retained columns to a polynomial."""
        if len(coefs) != self.p:
            raise ValueError(f"{len(coefs)} coefficients for {self.p} columns")
        constant = 0.0
        terms = []
        for c, t in zip(coefs, self.columns):
            if not t.powers and not t.indicators:
                constant += float(c)
            else:
                terms.append(Term(float(c), t.powers, t.indicators))
        return HurdlePolynomial(constant, tuple(terms), self.scope)


def monomial_descriptors(parents: Sequence[int], degree: int) -> list[Term]:
    """All admissible monomials over the parents with total degree <= degree.

    Each parent contributes nothing, an indicator (degree 1), or a power y^d
    (degree d >= 1); no parent contributes both.  The empty product (the
    intercept) comes first; the rest are sorted canonically.
    """
    combos: list[tuple[tuple[tuple[int, int], ...], tuple[int, ...]]] = [((), ())]
    for u in sorted(parents):
        grown = []
        for pw, ind in combos:
            used = sum(d for _, d in pw) + len(ind)
            grown.append((pw, ind))
            if used + 1 <= degree:
                grown.append((pw, ind + (u,)))
            for d in range(1, degree - used + 1):
                grown.append((pw + ((u, d),), ind))
        combos = grown
    terms = [Term(1.0, pw, ind) for pw, ind in combos]
    terms.sort(key=lambda t: (t.degree, t.powers, t.indicators))
    return terms


def _column_values(values: np.ndarray, term: Term) -> np.ndarray:
    col = np.ones(values.shape[0])
    for u, d in term.powers:
        col = col * values[:, u] ** d
    for v in term.indicators:
        col = col * (values[:, v] != 0.0)
    return col


def expand_features(
    values: np.ndarray,
    parents: Sequence[int],
    degree: int,
    covariate_ids: Sequence[int] = (),
) -> FeatureMatrix:
    """Build the design matrix for one node's conditional fit.

    ``values`` is the full (n, m) data matrix; ``parents`` and
    ``covariate_ids`` are column indices into it.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("need a nonempty 2-d data matrix")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if set(parents) & set(covariate_ids):
        raise ValueError("covariate columns cannot also be parents")

    descriptors = monomial_descriptors(parents, degree)
    descriptors += [Term(1.0, ((c, 1),), ()) for c in sorted(covariate_ids)]
    cols = [_column_values(values, t) for t in descriptors]
    scope = tuple(sorted(set(parents) | set(covariate_ids)))

    kept_idx, dropped_idx = _select_independent(cols)
    matrix = np.column_stack([cols[j] for j in kept_idx])
    return FeatureMatrix(
        matrix,
        tuple(descriptors[j] for j in kept_idx),
        tuple(descriptors[j] for j in dropped_idx),
        scope,
        degree,
    )


def _select_independent(cols: list[np.ndarray]) -> tuple[list[int], list[int]]:
    """Order-preserving selection of a numerically independent column subset.

    Modified Gram-Schmidt with one reorthogonalization pass; a column is
    dropped when its residual against the retained span is below tolerance.
    """
    kept: list[int] = []
    dropped: list[int] = []
    basis: list[np.ndarray] = []
    for j, col in enumerate(cols):
        norm0 = np.linalg.norm(col)
        resid = col.astype(float)
        for _ in range(2):
            for q in basis:
                resid = resid - (q @ resid) * q
        rnorm = np.linalg.norm(resid)
        if rnorm <= DROP_RTOL * max(1.0, norm0):
            dropped.append(j)
        else:
            kept.append(j)
            basis.append(resid / rnorm)
    return kept, dropped
