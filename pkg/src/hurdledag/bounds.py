"""False-selection bounds for complementary-pairs stability selection.

``max_tail_rconcave(x, eta, B, r)`` is the worst-case tail probability
P(X >= x) over random variables X on {0, 1/B, ..., 1} that are r-concave
(g_i = p_i^r is a convex sequence on an interval support, r < 0) with mean
at most eta.

The maximizer has g affine on its support {L..K} except possibly at an
endpoint, whose g may exceed the affine extension (one reduced atom;
raising an endpoint of a convex sequence keeps it convex).  Interior
points cannot leave the affine interpolation of the endpoints because
convexity bounds g from above there, i.e. p from below, and interior
surplus only wastes total mass and mean budget that the tail could use.
Each support interval therefore contributes three one-parameter families,
indexed by the endpoint ratio rho = g_end / g_start > 0 with the scale
eliminated by the total-mass constraint:

* pure affine g on {L..K}: mass tilts monotonically along the support as
  rho varies (monotone likelihood ratio), so the mean constraint pins rho
  at a unique root, found by bracketing on a log grid;
* affine g plus a reduced atom at K (or at L) with the mean constraint
  tight: the atom and scale solve linearly given rho, leaving a 1-d
  maximization over rho with feasibility (atom within its convexity cap)
  checked pointwise and the best grid cell polished locally.

Supports starting above 0 matter only when the mean budget allows them
(L <= eta*B).

The edge-selection error bound combines the two r-concave tails (the
simultaneous-selection proportion over B complementary pairs is
-1/2-concave; the plain selection proportion over 2B draws is
-1/4-concave) with the distribution-free Markov bound theta^2/(2 tau - 1).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

__all__ = ["max_tail_rconcave", "false_selection_bound", "choose_threshold"]

_RHO_GRID = 10.0 ** np.linspace(-9.0, 9.0, 73)


def _pure_affine_tail(L: int, K: int, t: int, etaB: float, invr: float) -> float:
    """Best tail for g affine from 1 to rho on {L..K}, mean tightened to eta*B.

    Mass tilts toward K as rho falls, so the mean decreases monotonically
    in rho from K toward L and the budget binds at one root.
    """
    span = K - L
    if span == 0:
        return 1.0 if (L >= t and L <= etaB) else 0.0
    frac = np.arange(span + 1, dtype=float) / span
    idx = np.arange(L, K + 1, dtype=float)

    def mean_excess(rho: float) -> float:
        p = (1.0 + (rho - 1.0) * frac) ** invr
        return float((idx * p).sum() / p.sum() - etaB)

    def tail(rho: float) -> float:
        p = (1.0 + (rho - 1.0) * frac) ** invr
        return float(p[idx >= t].sum() / p.sum())

    # mean runs from ~K (rho -> 0) down to L (rho -> inf); K > etaB >= L here
    p_grid = (1.0 + np.outer(_RHO_GRID - 1.0, frac)) ** invr
    excess = (p_grid * idx).sum(axis=1) / p_grid.sum(axis=1) - etaB
    nonpos = np.nonzero(excess <= 0.0)[0]
    if nonpos.size == 0:
        return 0.0
    j = int(nonpos[0])
    if j == 0:
        return tail(_RHO_GRID[0])
    a, b = _RHO_GRID[j - 1], _RHO_GRID[j]
    if mean_excess(b) > 0.0 or mean_excess(a) <= 0.0:  # sign lost to rounding
        return tail(b if mean_excess(b) <= mean_excess(a) else a)
    return tail(brentq(mean_excess, a, b, xtol=1e-300, rtol=8.9e-16))


def _atom_tails_grid(L: int, K: int, t: int, etaB: float, invr: float, end: bool) -> np.ndarray:
    """Tail values over the rho grid for the end-atom or start-atom family.

    Affine g runs over {L..K-1} (end) or {L+1..K} (start) with the atom at
    the remaining point; total mass is 1 and the mean exactly eta*B.
    Infeasible grid points (negative masses or atom above its convexity
    cap) return -1.
    """
    span = K - 1 - L
    lo = L if end else L + 1
    frac = np.arange(span + 1, dtype=float) / span
    idx = np.arange(lo, lo + span + 1, dtype=float)
    tail_sel = idx >= t
    base = 1.0 + np.outer(_RHO_GRID - 1.0, frac)
    p = base**invr
    S = p.sum(axis=1)
    M = p @ idx
    tails = p[:, tail_sel].sum(axis=1)
    if end:
        atom_pos = float(K)
        ext = 1.0 + (_RHO_GRID - 1.0) * ((K - L) / span)
    else:
        atom_pos = float(L)
        ext = 1.0 - (_RHO_GRID - 1.0) / span
    # solve c*S + pa = 1, c*M + atom_pos*pa = etaB for scale c and atom pa
    denom = atom_pos * S - M
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (atom_pos - etaB) / denom
        pa = 1.0 - c * S
        cap = np.where(ext > 0, c * ext**invr, np.inf)
    out = c * tails + (pa if end else 0.0) + (pa if (not end and L >= t) else 0.0)
    bad = (c <= 0) | (pa < 0) | (pa > cap + 1e-15) | ~np.isfinite(out)
    out[bad] = -1.0
    return out


def _atom_tail_at(L: int, K: int, t: int, etaB: float, invr: float, end: bool, rho: float) -> float:
    span = K - 1 - L
    lo = L if end else L + 1
    frac = np.arange(span + 1, dtype=float) / span
    idx = np.arange(lo, lo + span + 1, dtype=float)
    p = (1.0 + (rho - 1.0) * frac) ** invr
    S = float(p.sum())
    M = float(p @ idx)
    atom_pos = float(K) if end else float(L)
    denom = atom_pos * S - M
    if denom == 0.0:
        return -1.0
    c = (atom_pos - etaB) / denom
    pa = 1.0 - c * S
    ext = 1.0 + (rho - 1.0) * ((K - L) / span) if end else 1.0 - (rho - 1.0) / span
    cap = c * ext**invr if ext > 0 else math.inf
    if c <= 0 or pa < 0 or pa > cap + 1e-15:
        return -1.0
    tail = c * float(p[idx >= t].sum())
    if end or L >= t:
        tail += pa
    return tail


def _two_point_tail(L: int, K: int, t: int, etaB: float) -> float:
    """Adjacent two-point support {K-1, K}: convexity is vacuous."""
    pK = etaB - (K - 1)
    if not 0.0 <= pK <= 1.0:
        return 0.0
    return pK + ((1.0 - pK) if K - 1 >= t else 0.0)


def _max_tail(t: int, B: int, etaB: float, invr: float, L_cap: int) -> float:
    best = 0.0
    refine: list[tuple[float, int, int, bool, int]] = []
    L_hi = min(L_cap, t - 1)
    for L in range(0, L_hi + 1):
        for K in range(t, B + 1):
            if K - 1 - L == 0:
                best = max(best, _two_point_tail(L, K, t, etaB))
                continue
            if K - 1 - L < 0:
                continue
            best = max(best, _pure_affine_tail(L, K, t, etaB, invr))
            for end in (True, False):
                vals = _atom_tails_grid(L, K, t, etaB, invr, end)
                j = int(np.argmax(vals))
                if vals[j] > 0.0:
                    refine.append((float(vals[j]), L, K, end, j))
    for val, L, K, end, j in refine:
        if val < best - 0.05:  # polishing moves a grid value only slightly
            continue
        lo = math.log(_RHO_GRID[max(j - 1, 0)])
        hi = math.log(_RHO_GRID[min(j + 1, len(_RHO_GRID) - 1)])
        res = minimize_scalar(
            lambda u: -_atom_tail_at(L, K, t, etaB, invr, end, math.exp(u)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-11, "maxiter": 200},
        )
        best = max(best, val, -float(res.fun))
    return min(best, 1.0)


@lru_cache(maxsize=16384)
def _max_tail_cached(t: int, B: int, etaB: float, invr: float, quick: bool) -> float:
    if t <= 0 or etaB >= t:  # a point mass at t fits the budget outright
        return 1.0
    if etaB <= 0:
        return 0.0
    L_cap = 0 if quick else int(math.floor(etaB + 1e-12))
    return _max_tail(t, B, etaB, invr, L_cap)


def max_tail_rconcave(x: float, eta: float, B: int, r: float, _quick: bool = False) -> float:
    """Worst-case P(X >= x) for r-concave X on {0,1/B,...,1} with E X <= eta.

    ``_quick`` restricts supports to those starting at 0, giving a cheap
    lower bound used to reject hopeless thresholds early.
    """
    if not r < 0:
        raise ValueError("r must be negative")
    if B < 1:
        raise ValueError("B must be >= 1")
    if x <= 0:
        return 1.0
    if x > 1:
        return 0.0
    if eta <= 0:
        return 0.0
    t = math.ceil(x * B - 1e-9)
    return _max_tail_cached(t, B, round(eta * B, 12), 1.0 / r, _quick)


def false_selection_bound(tau: float, q: float, p_total: int, B: int) -> float:
    """Upper bound on the expected number of falsely selected edges.

    ``q`` is the average number of selections per run, ``p_total`` the number
    of selectable parameters, ``B`` the number of complementary pairs
    (frequencies have denominator 2B).  Valid for tau in (1/2, 1].
    """
    if not 0.5 < tau <= 1.0:
        raise ValueError("tau must lie in (1/2, 1]")
    if q <= 0:
        return 0.0
    theta = min(q / p_total, 1.0)
    markov = theta**2 / (2.0 * tau - 1.0)
    d_pairs = max_tail_rconcave(2.0 * tau - 1.0, theta**2, B, -0.5)
    d_all = max_tail_rconcave(tau, theta, 2 * B, -0.25)
    return p_total * min(markov, d_pairs, d_all, 1.0)


def _bound_exceeds(tau: float, q: float, p_total: int, B: int, limit: float) -> bool:
    """True when the bound at tau certainly exceeds ``limit``.

    Uses the Markov term and quick (supports-from-0) lower bounds of the
    two r-concave tails; since min(markov, lb1, lb2) <= bound is a valid
    lower bound, a positive answer rejects tau without the full scan.
    """
    theta = min(q / p_total, 1.0)
    if p_total * theta**2 / (2.0 * tau - 1.0) <= limit:
        return False
    if p_total * max_tail_rconcave(2.0 * tau - 1.0, theta**2, B, -0.5, _quick=True) <= limit:
        return False
    return p_total * max_tail_rconcave(tau, theta, 2 * B, -0.25, _quick=True) > limit


def choose_threshold(
    frequencies: np.ndarray, q_hat: float, p_total: int, B: int, target_fdr: float
) -> tuple[float | None, float, float]:
    """Smallest grid threshold whose estimated FDP is within target.

    Scans tau over the attainable grid {j/(2B) : j = B+1..2B}; the FDP
    estimate at tau is bound(tau) / max(1, #{frequencies > tau}).  Returns
    (tau, bound, fdp) or (None, inf, inf) when no threshold qualifies.
    """
    if not 0 < target_fdr < 1:
        raise ValueError("target_fdr must be in (0, 1)")
    freqs = np.asarray(frequencies, dtype=float)
    for j in range(B + 1, 2 * B + 1):
        tau = j / (2.0 * B)
        n_sel = max(1, int(np.sum(freqs > tau + 1e-12)))
        if q_hat > 0 and _bound_exceeds(tau, q_hat, p_total, B, target_fdr * n_sel):
            continue
        bound = false_selection_bound(tau, q_hat, p_total, B)
        fdp = bound / n_sel
        if fdp <= target_fdr:
            return tau, bound, fdp
    return None, math.inf, math.inf
