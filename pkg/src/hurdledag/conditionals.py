"""Univariate zero-inflated Gaussian conditionals in two parametrizations.

A conditional law for one node given its parents mixes a point mass at
exactly 0 with a Gaussian component, with density taken against Lebesgue
measure plus a unit atom at 0.  Two equivalent parametrizations are used:

* canonical ``(alpha, beta, k)``: density proportional to
  ``exp(alpha * 1{x != 0} + beta * x - k * x**2 / 2)`` with scalar ``k > 0``;
* moment ``(p, mu, sigma2)``: ``P(X != 0) = p`` and ``X | X != 0`` is
  ``N(mu, sigma2)``, carried as ``logit p`` so degenerate probabilities
  stay finite.

``alpha``/``beta`` (resp. ``logit_p``/``mu``) are polynomials in the parent
values and indicators sharing one scope; ``k`` and ``sigma2`` are scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .poly import HurdlePolynomial, constant_poly

__all__ = [
    "CanonicalParams",
    "MomentParams",
    "CanonicalConditional",
    "MomentConditional",
    "canonical_density",
    "moment_density",
    "to_moment",
    "to_canonical",
    "conditional_sample",
    "source_conditional",
    "LOGIT_CAP",
]

LOG_2PI = math.log(2.0 * math.pi)

# Degenerate logistic fits (all-zero or all-nonzero responses) are stored with
# a capped constant logit so downstream arithmetic stays finite.
LOGIT_CAP = 500.0


def softplus(x: np.ndarray | float) -> np.ndarray | float:
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


# -- scalar parameter triples --------------------------------------------------


@dataclass(frozen=True)
class CanonicalParams:
    """Scalar canonical parameters at one parent configuration."""

    alpha: float
    beta: float
    k: float

    def __post_init__(self):
        if not self.k > 0.0:
            raise ValueError(f"precision k must be positive, got {self.k}")

    def log_partition(self) -> float:
        """Log normalizer making the density integrate to 1 against Lebesgue + atom."""
        eta = self.alpha + self.beta**2 / (2.0 * self.k) + 0.5 * (LOG_2PI - math.log(self.k))
        return float(softplus(eta))

    def to_moment(self) -> "MomentParams":
        logit_p = self.alpha + self.beta**2 / (2.0 * self.k) - 0.5 * math.log(self.k / (2.0 * math.pi))
        return MomentParams(logit_p, self.beta / self.k, 1.0 / self.k)


@dataclass(frozen=True)
class MomentParams:
    """Scalar moment parameters at one parent configuration."""

    logit_p: float
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError(f"variance must be positive, got {self.sigma2}")

    @property
    def p(self) -> float:
        return float(sigmoid(self.logit_p))

    def to_canonical(self) -> CanonicalParams:
        k = 1.0 / self.sigma2
        beta = self.mu / self.sigma2
        alpha = self.logit_p - self.mu**2 / (2.0 * self.sigma2) + 0.5 * math.log(k / (2.0 * math.pi))
        return CanonicalParams(alpha, beta, k)


def canonical_log_density_params(x: np.ndarray | float, alpha, beta, k) -> np.ndarray | float:
    """Pointwise log density; parameters may be scalars or row-aligned arrays."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    k = np.asarray(k, dtype=float)
    eta = alpha + beta**2 / (2.0 * k) + 0.5 * (LOG_2PI - np.log(k))
    out = np.where(x != 0.0, alpha + beta * x - 0.5 * k * x * x, 0.0) - softplus(eta)
    return out if out.ndim else float(out)


def moment_log_density_params(x: np.ndarray | float, logit_p, mu, sigma2) -> np.ndarray | float:
    """Pointwise log density; parameters may be scalars or row-aligned arrays."""
    x = np.asarray(x, dtype=float)
    logit_p = np.asarray(logit_p, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    log_p = -softplus(-logit_p)
    log_q = -softplus(logit_p)
    norm = log_p - 0.5 * (LOG_2PI + np.log(sigma2))
    out = np.where(x != 0.0, norm - (x - mu) ** 2 / (2.0 * sigma2), log_q)
    return out if out.ndim else float(out)


# -- conditionals with polynomial parameter maps -------------------------------


def _unify_scopes(*polys: HurdlePolynomial) -> tuple[HurdlePolynomial, ...]:
    scope = tuple(sorted(set().union(*(p.scope for p in polys))))
    return tuple(HurdlePolynomial(p.constant, p.terms, scope) for p in polys)


@dataclass(frozen=True)
class CanonicalConditional:
    """One node's law given its parents, canonical parametrization.

    ``alpha`` and ``beta`` are polynomials over the shared parent scope;
    ``k`` is a positive scalar precision.
    """

    alpha: HurdlePolynomial
    beta: HurdlePolynomial
    k: float

    def __post_init__(self):
        if not self.k > 0.0:
            raise ValueError(f"precision k must be positive, got {self.k}")
        a, b = _unify_scopes(self.alpha, self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def scope(self) -> tuple[int, ...]:
        return self.alpha.scope

    def at(self, values: Mapping[int, float]) -> CanonicalParams:
        return CanonicalParams(self.alpha.evaluate(values), self.beta.evaluate(values), self.k)

    def params_rows(self, columns: Mapping[int, np.ndarray], n: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.alpha.evaluate_rows(columns)
        b = self.beta.evaluate_rows(columns)
        if a.size == 0 and n is not None:
            a = np.full(n, self.alpha.constant)
            b = np.full(n, self.beta.constant)
        return a, b, np.full_like(a, self.k)

    def log_density_rows(self, x: np.ndarray, columns: Mapping[int, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b, kk = self.params_rows(columns, n=x.size)
        return canonical_log_density_params(x, a, b, kk)

    def to_moment(self) -> "MomentConditional":
        """Exact conversion; ``beta**2`` is expanded by polynomial self-multiplication."""
        k = self.k
        half_b2 = self.beta.square().scale(1.0 / (2.0 * k))
        logit_p = self.alpha + half_b2 + (-0.5 * math.log(k / (2.0 * math.pi)))
        mu = self.beta.scale(1.0 / k)
        return MomentConditional(logit_p, mu, 1.0 / k)

    def to_json_dict(self) -> dict:
        return {
            "kind": "canonical",
            "alpha": self.alpha.to_json_dict(),
            "beta": self.beta.to_json_dict(),
            "k": self.k,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CanonicalConditional":
        return cls(
            HurdlePolynomial.from_json_dict(obj["alpha"]),
            HurdlePolynomial.from_json_dict(obj["beta"]),
            float(obj["k"]),
        )


@dataclass(frozen=True)
class MomentConditional:
    """One node's law given its parents, moment parametrization.

    ``logit_p`` and ``mu`` are polynomials over the shared parent scope;
    ``sigma2`` is a positive scalar variance.
    """

    logit_p: HurdlePolynomial
    mu: HurdlePolynomial
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError(f"variance must be positive, got {self.sigma2}")
        lp, mu = _unify_scopes(self.logit_p, self.mu)
        object.__setattr__(self, "logit_p", lp)
        object.__setattr__(self, "mu", mu)

    @property
    def scope(self) -> tuple[int, ...]:
        return self.logit_p.scope

    def at(self, values: Mapping[int, float]) -> MomentParams:
        return MomentParams(self.logit_p.evaluate(values), self.mu.evaluate(values), self.sigma2)

    def params_rows(self, columns: Mapping[int, np.ndarray], n: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lp = self.logit_p.evaluate_rows(columns)
        mu = self.mu.evaluate_rows(columns)
        if lp.size == 0 and n is not None:
            lp = np.full(n, self.logit_p.constant)
            mu = np.full(n, self.mu.constant)
        return lp, mu, np.full_like(lp, self.sigma2)

    def log_density_rows(self, x: np.ndarray, columns: Mapping[int, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lp, mu, s2 = self.params_rows(columns, n=x.size)
        return moment_log_density_params(x, lp, mu, s2)

    def sample_rows(self, rng: np.random.Generator, columns: Mapping[int, np.ndarray], n: int) -> np.ndarray:
        """One draw per row: Bernoulli(p) gate, then Gaussian on success, else exact 0."""
        lp, mu, s2 = self.params_rows(columns, n=n)
        gate = rng.random(lp.shape) < sigmoid(lp)
        draws = rng.normal(mu, np.sqrt(s2))
        return np.where(gate, draws, 0.0)

    def to_canonical(self) -> CanonicalConditional:
        k = 1.0 / self.sigma2
        beta = self.mu.scale(k)
        half_mu2 = self.mu.square().scale(1.0 / (2.0 * self.sigma2))
        alpha = self.logit_p - half_mu2 + 0.5 * math.log(k / (2.0 * math.pi))
        return CanonicalConditional(alpha, beta, k)

    def to_json_dict(self) -> dict:
        return {
            "kind": "moment",
            "logit_p": self.logit_p.to_json_dict(),
            "mu": self.mu.to_json_dict(),
            "sigma2": self.sigma2,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MomentConditional":
        return cls(
            HurdlePolynomial.from_json_dict(obj["logit_p"]),
            HurdlePolynomial.from_json_dict(obj["mu"]),
            float(obj["sigma2"]),
        )


Conditional = CanonicalConditional | MomentConditional


def conditional_from_json_dict(obj: dict) -> Conditional:
    if obj["kind"] == "canonical":
        return CanonicalConditional.from_json_dict(obj)
    if obj["kind"] == "moment":
        return MomentConditional.from_json_dict(obj)
    raise ValueError(f"unknown conditional kind {obj['kind']!r}")


# -- module-level operations ----------------------------------------------------


def canonical_density(cond: CanonicalConditional, x: float, parents: Mapping[int, float]) -> float:
    """Density of ``x`` given parent values, against Lebesgue + atom at 0."""
    prm = cond.at(parents)
    return float(np.exp(canonical_log_density_params(x, prm.alpha, prm.beta, prm.k)))


def moment_density(cond: MomentConditional, x: float, parents: Mapping[int, float]) -> float:
    """Density of ``x`` given parent values, against Lebesgue + atom at 0."""
    prm = cond.at(parents)
    return float(np.exp(moment_log_density_params(x, prm.logit_p, prm.mu, prm.sigma2)))


def to_moment(cond: CanonicalConditional) -> MomentConditional:
    return cond.to_moment()


def to_canonical(cond: MomentConditional) -> CanonicalConditional:
    return cond.to_canonical()


def conditional_sample(cond: Conditional, parents: Mapping[int, float], rng: np.random.Generator) -> float:
    """One draw: 0.0 exactly with probability 1-p, else a Gaussian value."""
    prm = cond.at(parents)
    if isinstance(prm, CanonicalParams):
        prm = prm.to_moment()
    if rng.random() >= prm.p:
        return 0.0
    return float(rng.normal(prm.mu, math.sqrt(prm.sigma2)))


def source_conditional() -> MomentConditional:
    """Parent-free law for source nodes: half an atom at 0, half a standard normal."""
    return MomentConditional(constant_poly(0.0), constant_poly(0.0), 1.0)
