"""Maximum-likelihood fitting of one node's conditional given a parent set.

The node log-likelihood splits at zero:

* moment parametrization: a logistic regression of the nonzero indicator on
  the expanded features, plus a Gaussian linear regression of the value on
  the same features restricted to nonzero rows, with sigma^2 the MLE
  (divisor n_nonzero).  The two maximizations are separate and exact.
* canonical parametrization: a joint damped-Newton minimization of the
  canonical negative log-likelihood over (alpha-coefficients,
  beta-coefficients, log k), which is convex in (alpha, beta, k).

Both accept a small ridge penalty on non-intercept coefficients (never on
log k), guarding separation and collinearity; reported log-likelihoods are
always unpenalized.  BIC = nu * log(n) - 2 * loglik is the score minimized
by structure search, with nu the count of free parameters actually fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from . import kernels
from .conditionals import (
    LOGIT_CAP,
    CanonicalConditional,
    Conditional,
    MomentConditional,
)
from .data import Dataset
from .features import FeatureMatrix, expand_features
from .poly import constant_poly

__all__ = ["FitError", "FitConfig", "NodeFit", "fit_moment", "fit_canonical", "local_score"]

LOG_2PI = math.log(2.0 * math.pi)
SIGMA2_FLOOR = 1e-12


class FitError(RuntimeError):
    """A node fit failed; diagnostics say why."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FitConfig:
    """Shared knobs for node fits and structure-search scoring."""

    kind: Literal["canonical", "moment"] = "moment"
    degrees: tuple[int, ...] = (1, 2, 3)
    ridge: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 200
    covariate_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("canonical", "moment"):
            raise ValueError(f"unknown parametrization kind {self.kind!r}")
        if not self.degrees or any(d < 1 for d in self.degrees):
            raise ValueError("degrees must be a nonempty list of integers >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        object.__setattr__(self, "degrees", tuple(self.degrees))
        object.__setattr__(self, "covariate_ids", tuple(self.covariate_ids))


@dataclass(frozen=True)
class NodeFit:
    """A fitted conditional with its likelihood bookkeeping."""

    conditional: Conditional
    loglik: float
    nu: int
    bic: float
    degree_used: int
    diagnostics: dict = field(compare=False)

    def to_json_dict(self) -> dict:
        return {
            "conditional": self.conditional.to_json_dict(),
            "loglik": self.loglik,
            "nu": self.nu,
            "bic": self.bic,
            "degree_used": self.degree_used,
            "diagnostics": self.diagnostics,
        }


def _values(data: Dataset | np.ndarray) -> np.ndarray:
    return data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _bic(loglik: float, nu: int, n: int) -> float:
    return nu * math.log(n) - 2.0 * loglik


def _degenerate_fit(
    fm: FeatureMatrix, y: np.ndarray, n: int, degree: int, all_zero: bool, ridge: float
) -> NodeFit:
    """Fit when the response is all-zero or all-nonzero.

    The logistic part is replaced by the degenerate probability (capped
    logit), contributing exactly 0 to the log-likelihood and 0 free
    parameters.  The Gaussian part is fitted only in the all-nonzero case.
    """
    scope = fm.scope
    if all_zero:
        cond = MomentConditional(constant_poly(-LOGIT_CAP, scope), constant_poly(0.0, scope), 1.0)
        loglik, nu = 0.0, 0
        diag = {"degenerate": "all_zero", "converged": True, "iterations": 0,
                "n_dropped": len(fm.dropped), "n_nonzero": 0}
    else:
        w, sigma2, gauss_ll, floored = _gaussian_part(fm.matrix, y, ridge)
        cond = MomentConditional(constant_poly(LOGIT_CAP, scope), fm.to_polynomial(w), sigma2)
        loglik = gauss_ll
        nu = fm.p + 1
        diag = {"degenerate": "all_nonzero", "converged": True, "iterations": 0,
                "n_dropped": len(fm.dropped), "n_nonzero": n}
        if floored:
            diag["sigma2_floored"] = True
    return NodeFit(cond, loglik, nu, _bic(loglik, nu, n), degree, diag)


def _gaussian_part(X: np.ndarray, y: np.ndarray, ridge: float) -> tuple[np.ndarray, float, float, bool]:
    """Ridge-penalized least squares plus the Gaussian MLE variance.

    Returns (coefficients, sigma2, exact unpenalized log-likelihood, floored).
    """
    n_nz, p = X.shape
    pen = ridge * np.eye(p)
    pen[0, 0] = 0.0
    try:
        w = np.linalg.solve(X.T @ X + pen, X.T @ y)
    except np.linalg.LinAlgError:
        w, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ w
    rss = float(resid @ resid)
    sigma2 = rss / n_nz
    floored = sigma2 < SIGMA2_FLOOR
    if floored:
        sigma2 = SIGMA2_FLOOR
    loglik = -0.5 * n_nz * (LOG_2PI + math.log(sigma2)) - rss / (2.0 * sigma2)
    return w, sigma2, loglik, floored


def fit_moment(
    data: Dataset | np.ndarray,
    node: int,
    parents: Sequence[int],
    degree: int,
    ridge: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 200,
    covariate_ids: Sequence[int] = (),
) -> NodeFit:
    """Moment-parametrization MLE: logistic part plus Gaussian part."""
    values = _values(data)
    y = values[:, node]
    n = len(y)
    z = (y != 0.0).astype(float)
    if node in set(parents):
        raise ValueError("node cannot be its own parent")
    fm = expand_features(values, tuple(parents), degree, covariate_ids)
    n_nz = int(z.sum())
    if n_nz == 0 or n_nz == n:
        return _degenerate_fit(fm, y, n, degree, all_zero=(n_nz == 0), ridge=ridge)

    w_log, logistic_nll, converged, iters = kernels.logistic_irls(
        fm.matrix, z, ridge=ridge, tol=tol, max_iter=max_iter
    )
    nz = z == 1.0
    w_lin, sigma2, gauss_ll, floored = _gaussian_part(fm.matrix[nz], y[nz], ridge)

    loglik = -logistic_nll + gauss_ll
    nu = 2 * fm.p + 1
    cond = MomentConditional(fm.to_polynomial(w_log), fm.to_polynomial(w_lin), sigma2)
    diag = {
        "converged": bool(converged),
        "iterations": int(iters),
        "n_dropped": len(fm.dropped),
        "n_nonzero": n_nz,
        "logistic_loglik": -logistic_nll,
        "gaussian_loglik": gauss_ll,
    }
    if floored:
        diag["sigma2_floored"] = True
    if np.max(np.abs(w_log)) > 30.0:
        diag["separation_suspected"] = True
    return NodeFit(cond, loglik, nu, _bic(loglik, nu, n), degree, diag)


def fit_canonical(
    data: Dataset | np.ndarray,
    node: int,
    parents: Sequence[int],
    degree: int,
    ridge: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 200,
    covariate_ids: Sequence[int] = (),
) -> NodeFit:
    """Canonical-parametrization MLE by damped Newton on the joint NLL.

    Works in theta = (a, b, tau) with k = exp(tau); the NLL is convex in
    (a, b, k), and the line-searched Newton iteration is reliable in tau.
    Degenerate all-zero/all-nonzero responses fall back to the moment-form
    degenerate fit (an infinite canonical alpha is not representable).
    """
    values = _values(data)
    y = values[:, node]
    n = len(y)
    z = (y != 0.0).astype(float)
    if node in set(parents):
        raise ValueError("node cannot be its own parent")
    fm = expand_features(values, tuple(parents), degree, covariate_ids)
    n_nz = int(z.sum())
    if n_nz == 0 or n_nz == n:
        fit = _degenerate_fit(fm, y, n, degree, all_zero=(n_nz == 0), ridge=ridge)
        fit.diagnostics["fallback"] = "moment-degenerate"
        return fit

    p = fm.p
    X = fm.matrix
    y_nz = y[z == 1.0]
    k0 = float(np.clip(1.0 / max(np.var(y_nz), 1e-6), 1e-6, 1e6))
    zbar = n_nz / n
    a = np.zeros(p)
    a[0] = math.log(zbar / (1.0 - zbar)) + 0.5 * math.log(k0 / (2.0 * math.pi))
    b = np.zeros(p)
    b[0] = float(np.mean(y_nz)) * k0
    tau = math.log(k0)

    pen_mask = np.zeros(2 * p + 1)
    pen_mask[1:p] = 1.0
    pen_mask[p + 1 : 2 * p] = 1.0

    def penalized_nll(av, bv, tv):
        raw = kernels.canonical_nll(X, y, z, av, bv, tv)
        return raw + 0.5 * ridge * (float(av[1:] @ av[1:]) + float(bv[1:] @ bv[1:]))

    nll = penalized_nll(a, b, tau)
    converged = False
    stalled = False
    it = 0
    while it < max_iter:
        raw_nll, grad, H = kernels.canonical_objective(X, y, z, a, b, tau)
        theta = np.concatenate([a, b, [tau]])
        grad = grad + ridge * pen_mask * theta
        H = H + ridge * np.diag(pen_mask)
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        it += 1
        step = None
        jitter = 0.0
        for _ in range(8):
            try:
                step = np.linalg.solve(H + jitter * np.eye(2 * p + 1), -grad)
                break
            except np.linalg.LinAlgError:
                jitter = max(10.0 * jitter, 1e-10 * max(np.trace(H) / (2 * p + 1), 1.0))
        if step is None:
            raise FitError("canonical Newton system unsolvable", {"iterations": it})
        gd = float(grad @ step)
        gmax = float(np.max(np.abs(grad)))
        t = 1.0
        cand_nll = nll
        accepted = False
        for _ in range(60):
            cand = theta + t * step
            cand_nll = penalized_nll(cand[:p], cand[p : 2 * p], cand[2 * p])
            if cand_nll <= nll + 1e-4 * t * gd or cand_nll <= nll:
                accepted = True
                break
            t *= 0.5
        improvement = nll - cand_nll if accepted else 0.0
        if not accepted or improvement <= 1e-15 * (1.0 + abs(nll)):
            # the NLL is flat to float precision near the optimum (candidates
            # differ by ulps); judge the full Newton step by gradient decrease
            full = theta + step
            _, g2, _ = kernels.canonical_objective(
                X, y, z, full[:p], full[p : 2 * p], full[2 * p]
            )
            g2 = g2 + ridge * pen_mask * full
            if float(np.max(np.abs(g2))) < 0.9 * gmax:
                a, b, tau = full[:p], full[p : 2 * p], float(full[2 * p])
                nll = penalized_nll(a, b, tau)
                if tau < -40.0:
                    raise FitError(
                        "precision k collapsed to 0", {"iterations": it, "tau": tau}
                    )
                continue
            if accepted:
                theta = theta + t * step
                a, b, tau = theta[:p], theta[p : 2 * p], float(theta[2 * p])
                nll = cand_nll
            stalled = True
            break
        theta = theta + t * step
        a, b, tau = theta[:p], theta[p : 2 * p], float(theta[2 * p])
        nll = cand_nll
        if tau < -40.0:
            raise FitError("precision k collapsed to 0", {"iterations": it, "tau": tau})
    if not converged:
        _, grad, _ = kernels.canonical_objective(X, y, z, a, b, tau)
        grad = grad + ridge * pen_mask * np.concatenate([a, b, [tau]])
        gmax = float(np.max(np.abs(grad)))
        converged = gmax <= tol
        if not converged and not (stalled and gmax <= 1e-4):
            raise FitError(
                f"canonical fit did not converge (grad {gmax:.2e} after {it} iterations)",
                {"iterations": it, "grad_inf": gmax},
            )

    loglik = -float(kernels.canonical_nll(X, y, z, a, b, tau))
    nu = 2 * p + 1
    cond = CanonicalConditional(fm.to_polynomial(a), fm.to_polynomial(b), float(math.exp(tau)))
    diag = {
        "converged": bool(converged),
        "iterations": int(it),
        "n_dropped": len(fm.dropped),
        "n_nonzero": n_nz,
    }
    if stalled and not converged:
        diag["stalled_at_float_resolution"] = True
    return NodeFit(cond, loglik, nu, _bic(loglik, nu, n), degree, diag)


def local_score(
    data: Dataset | np.ndarray,
    node: int,
    parents: Sequence[int],
    config: FitConfig,
) -> NodeFit:
    """Fit every configured degree, return the minimum-BIC fit.

    With an empty parent set the basis is the intercept for every degree, so
    only one fit is run.
    """
    fitter = fit_canonical if config.kind == "canonical" else fit_moment
    degrees = config.degrees if (parents or config.covariate_ids) else config.degrees[:1]
    best: NodeFit | None = None
    errors: list[str] = []
    for d in degrees:
        try:
            fit = fitter(
                data, node, parents, d,
                ridge=config.ridge, tol=config.tol, max_iter=config.max_iter,
                covariate_ids=config.covariate_ids,
            )
        except FitError as e:
            errors.append(f"degree {d}: {e}")
            continue
        if best is None or fit.bic < best.bic:
            best = fit
    if best is None:
        raise FitError(f"all degrees failed for node {node}: {'; '.join(errors)}")
    return best
