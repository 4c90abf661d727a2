"""Pure-numpy fitting kernels; reference implementation of the compiled versions.

Both backends expose the same three functions:

* ``logistic_irls``: ridge-penalized logistic regression by damped Newton,
  intercept (column 0) unpenalized.
* ``canonical_nll``: canonical Hurdle negative log-likelihood at a point.
* ``canonical_objective``: the same plus gradient and Hessian in the
  parameter vector theta = (a_0..a_{p-1}, b_0..b_{p-1}, tau), k = exp(tau).

Penalties are NOT included in canonical_nll/canonical_objective; the driver
adds them so both backends stay in lockstep.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logistic_nll(X: np.ndarray, z: np.ndarray, w: np.ndarray, ridge: float) -> float:
    eta = X @ w
    pen = 0.5 * ridge * float(w[1:] @ w[1:])
    return float(_softplus(eta).sum() - z @ eta) + pen


def logistic_irls(
    X: np.ndarray,
    z: np.ndarray,
    ridge: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 100,
    w0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, bool, int]:
    """Minimize sum softplus(Xw) - z'Xw + ridge/2 |w[1:]|^2 by damped Newton.

    Returns (w, unpenalized_nll, converged, iterations).
    """
    n, p = X.shape
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    pen_mask = np.ones(p)
    pen_mask[0] = 0.0
    nll = _logistic_nll(X, z, w, ridge)
    it = 0
    converged = False
    while it < max_iter:
        eta = X @ w
        s = _sigmoid(eta)
        grad = X.T @ (s - z) + ridge * pen_mask * w
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        it += 1
        wgt = s * (1.0 - s)
        H = (X * wgt[:, None]).T @ X + ridge * np.diag(pen_mask)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            H = H + 1e-8 * np.trace(H) / p * np.eye(p)
            step = np.linalg.solve(H, -grad)
        t = 1.0
        gd = float(grad @ step)
        cand_nll = nll
        for _ in range(60):
            cand = w + t * step
            cand_nll = _logistic_nll(X, z, cand, ridge)
            if cand_nll <= nll + 1e-4 * t * gd or cand_nll <= nll:
                break
            t *= 0.5
        w = w + t * step
        improvement = nll - cand_nll
        nll = cand_nll
        if improvement <= 1e-15 * (1.0 + abs(nll)):
            break  # at floating-point resolution of the objective
    if not converged:
        grad = X.T @ (_sigmoid(X @ w) - z) + ridge * pen_mask * w
        converged = bool(np.max(np.abs(grad)) <= tol)
    eta = X @ w
    raw_nll = float(_softplus(eta).sum() - z @ eta)
    return w, raw_nll, converged, it


def canonical_nll(
    X: np.ndarray, y: np.ndarray, z: np.ndarray, a: np.ndarray, b: np.ndarray, tau: float
) -> float:
    """Canonical Hurdle NLL: sum softplus(eta) - z*alpha - beta*y + k*y^2/2."""
    k = np.exp(tau)
    alpha = X @ a
    beta = X @ b
    eta = alpha + beta**2 / (2.0 * k) + 0.5 * (np.log(2.0 * np.pi) - tau)
    return float(_softplus(eta).sum() - z @ alpha - beta @ y + 0.5 * k * float(y @ y))


def canonical_objective(
    X: np.ndarray, y: np.ndarray, z: np.ndarray, a: np.ndarray, b: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """NLL, gradient, Hessian in theta = (a, b, tau); k = exp(tau).

    eta_i = alpha_i + beta_i^2/(2k) + (log 2pi - tau)/2 and s = sigmoid(eta);
    the Hessian is sum_i s(1-s) u u' + s * hess(eta_i) + data curvature in tau.
    """
    n, p = X.shape
    k = float(np.exp(tau))
    alpha = X @ a
    beta = X @ b
    gt = -(beta**2) / (2.0 * k) - 0.5  # d eta / d tau
    eta = alpha + beta**2 / (2.0 * k) + 0.5 * (np.log(2.0 * np.pi) - tau)
    s = _sigmoid(eta)
    w1 = s * (1.0 - s)

    nll = float(_softplus(eta).sum() - z @ alpha - beta @ y + 0.5 * k * float(y @ y))

    grad = np.empty(2 * p + 1)
    grad[:p] = X.T @ (s - z)
    grad[p : 2 * p] = X.T @ (s * beta / k - y)
    grad[2 * p] = float(s @ gt + 0.5 * k * (y @ y))

    # u_i = (x_i, (beta_i/k) x_i, gt_i)
    U = np.empty((n, 2 * p + 1))
    U[:, :p] = X
    U[:, p : 2 * p] = X * (beta / k)[:, None]
    U[:, 2 * p] = gt
    H = (U * w1[:, None]).T @ U
    # curvature of eta itself: d2eta/db db' = xx'/k ; d2/db dtau = -(beta/k) x ; d2/dtau2 = beta^2/(2k)
    Hbb = (X * s[:, None]).T @ X / k
    H[p : 2 * p, p : 2 * p] += Hbb
    hbt = X.T @ (-s * beta / k)
    H[p : 2 * p, 2 * p] += hbt
    H[2 * p, p : 2 * p] += hbt
    H[2 * p, 2 * p] += float(s @ (beta**2) / (2.0 * k) + 0.5 * k * (y @ y))
    return nll, grad, H
