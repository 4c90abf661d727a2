"""Sparse polynomials in parent values and their zero/nonzero indicators.

A term is a product ``c * prod_U y_U**d_U * prod_V 1{y_V != 0}`` where each
node contributes either a power factor or an indicator factor, never both
(``1{y} * y**d == y**d``, so mixed factors would be redundant).  A polynomial
is a constant plus a set of such terms over a declared scope of node ids.

The algebra applied on multiplication keeps the representation canonical:
``1**2 == 1`` and ``1{y} * y**d == y**d`` are simplified eagerly, duplicate
factor maps are merged, and zero coefficients are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = ["Term", "HurdlePolynomial", "hpoly", "constant_poly"]


@dataclass(frozen=True)
class Term:
    """One monomial: ``coef * prod y**d * prod 1{y != 0}``.

    ``powers`` maps node ids to exponents >= 1 (stored sorted), ``indicators``
    is the sorted tuple of nodes contributing a bare indicator factor.
    """

    coef: float
    powers: tuple[tuple[int, int], ...] = ()
    indicators: tuple[int, ...] = ()

    def key(self) -> tuple:
        return (self.powers, self.indicators)

    @property
    def degree(self) -> int:
        return sum(d for _, d in self.powers) + len(self.indicators)

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(u for u, _ in self.powers) | frozenset(self.indicators)

    def evaluate(self, values: Mapping[int, float]) -> float:
        out = self.coef
        for u, d in self.powers:
            out *= values[u] ** d
        for v in self.indicators:
            if values[v] == 0.0:
                return 0.0
        return out


def _normalize_terms(terms: Iterable[Term]) -> tuple[Term, ...]:
    merged: dict[tuple, float] = {}
    for t in terms:
        pset = {u for u, _ in t.powers}
        if any(d < 1 for _, d in t.powers):
            raise ValueError("power exponents must be >= 1")
        if pset & set(t.indicators):
            raise ValueError(f"node with both power and indicator factor in term {t}")
        powers = tuple(sorted(t.powers))
        indicators = tuple(sorted(t.indicators))
        key = (powers, indicators)
        merged[key] = merged.get(key, 0.0) + t.coef
    out = [
        Term(coef, powers, indicators)
        for (powers, indicators), coef in merged.items()
        if coef != 0.0
    ]
    out.sort(key=lambda t: (t.degree, t.powers, t.indicators))
    return tuple(out)


@dataclass(frozen=True)
class HurdlePolynomial:
    """Polynomial in node values and their nonzero indicators over ``scope``.

    ``scope`` may be larger than the set of nodes actually appearing in
    terms; the empty scope denotes a constant.
    """

    constant: float
    terms: tuple[Term, ...] = ()
    scope: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", _normalize_terms(self.terms))
        object.__setattr__(self, "scope", tuple(sorted(set(self.scope))))
        support = set()
        for t in self.terms:
            support |= t.nodes
        if not support <= set(self.scope):
            raise ValueError(f"term nodes {support} not contained in scope {self.scope}")

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, values: Mapping[int, float]) -> float:
        """Evaluate at a point; ``values`` must cover the scope exactly at 0/nonzero."""
        missing = set(self.scope) - set(values)
        if missing:
            raise KeyError(f"values missing scope nodes {sorted(missing)}")
        return self.constant + sum(t.evaluate(values) for t in self.terms)

    def evaluate_rows(self, columns: Mapping[int, np.ndarray]) -> np.ndarray:
        """Vectorized evaluation given one value array per scope node."""
        missing = set(self.scope) - set(columns)
        if missing:
            raise KeyError(f"columns missing scope nodes {sorted(missing)}")
        if not columns:
            return np.full(0, self.constant)
        n = len(next(iter(columns.values())))
        out = np.full(n, self.constant, dtype=float)
        for t in self.terms:
            prod = np.full(n, t.coef, dtype=float)
            for u, d in t.powers:
                prod = prod * columns[u] ** d
            for v in t.indicators:
                prod = prod * (columns[v] != 0.0)
            out += prod
        return out

    # -- structure ----------------------------------------------------------

    @property
    def degree(self) -> int:
        """Max over terms of total power plus indicator count; 0 if constant."""
        return max((t.degree for t in self.terms), default=0)

    def is_strong(self) -> bool:
        """True iff every scope node has a pure power term ``c * y_U**d``.

        Equivalently, zeroing all other scope nodes leaves a restriction that
        is non-constant on the nonzero reals, for every node in the scope.
        """
        covered = set()
        for t in self.terms:
            if len(t.powers) == 1 and not t.indicators:
                covered.add(t.powers[0][0])
        return covered >= set(self.scope)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "HurdlePolynomial | float") -> "HurdlePolynomial":
        if isinstance(other, (int, float)):
            return HurdlePolynomial(self.constant + other, self.terms, self.scope)
        return HurdlePolynomial(
            self.constant + other.constant,
            self.terms + other.terms,
            tuple(set(self.scope) | set(other.scope)),
        )

    __radd__ = __add__

    def __sub__(self, other: "HurdlePolynomial | float") -> "HurdlePolynomial":
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + other.scale(-1.0)

    def __neg__(self) -> "HurdlePolynomial":
        return self.scale(-1.0)

    def scale(self, a: float) -> "HurdlePolynomial":
        return HurdlePolynomial(
            a * self.constant,
            tuple(Term(a * t.coef, t.powers, t.indicators) for t in self.terms),
            self.scope,
        )

    def scale_terms(self, a: float) -> "HurdlePolynomial":
        """Scale the non-constant terms only (used by coefficient rescaling)."""
        return HurdlePolynomial(
            self.constant,
            tuple(Term(a * t.coef, t.powers, t.indicators) for t in self.terms),
            self.scope,
        )

    def multiply(self, other: "HurdlePolynomial") -> "HurdlePolynomial":
        """Polynomial product with ``1**2 == 1`` and ``1{y} * y**d == y**d``."""
        terms: list[Term] = []
        mine = list(self.terms) + ([Term(self.constant)] if self.constant != 0.0 else [])
        theirs = list(other.terms) + ([Term(other.constant)] if other.constant != 0.0 else [])
        constant = 0.0
        for s in mine:
            for t in theirs:
                pw: dict[int, int] = {}
                for u, d in s.powers + t.powers:
                    pw[u] = pw.get(u, 0) + d
                ind = (set(s.indicators) | set(t.indicators)) - set(pw)
                coef = s.coef * t.coef
                if not pw and not ind:
                    constant += coef
                else:
                    terms.append(Term(coef, tuple(sorted(pw.items())), tuple(sorted(ind))))
        return HurdlePolynomial(constant, tuple(terms), tuple(set(self.scope) | set(other.scope)))

    def square(self) -> "HurdlePolynomial":
        return self.multiply(self)

    def max_abs_coefficient_difference(self, other: "HurdlePolynomial") -> float:
        """Largest absolute difference across constants and matched term coefficients."""
        mine = {t.key(): t.coef for t in self.terms}
        theirs = {t.key(): t.coef for t in other.terms}
        diff = abs(self.constant - other.constant)
        for key in set(mine) | set(theirs):
            diff = max(diff, abs(mine.get(key, 0.0) - theirs.get(key, 0.0)))
        return diff

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        terms = []
        for t in self.terms:
            factors = [{"node": u, "kind": "pow", "d": d} for u, d in t.powers]
            factors += [{"node": v, "kind": "ind"} for v in t.indicators]
            terms.append({"coef": t.coef, "factors": factors})
        return {"constant": self.constant, "terms": terms, "scope": list(self.scope)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "HurdlePolynomial":
        terms = []
        for t in obj["terms"]:
            powers = []
            indicators = []
            for f in t["factors"]:
                if f["kind"] == "pow":
                    powers.append((f["node"], f["d"]))
                elif f["kind"] == "ind":
                    indicators.append(f["node"])
                else:
                    raise ValueError(f"unknown factor kind {f['kind']!r}")
            terms.append(Term(t["coef"], tuple(powers), tuple(indicators)))
        return cls(obj["constant"], tuple(terms), tuple(obj.get("scope", ())))


def hpoly(constant: float, terms: Sequence[Term] = (), scope: Sequence[int] = ()) -> HurdlePolynomial:
    """Convenience constructor accepting any term/scope iterables."""
    return HurdlePolynomial(float(constant), tuple(terms), tuple(scope))


def constant_poly(c: float, scope: Sequence[int] = ()) -> HurdlePolynomial:
    return HurdlePolynomial(float(c), (), tuple(scope))
