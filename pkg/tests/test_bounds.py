"""Worst-case tail bounds for stability selection error control.

The solver's exactness was established against a long SLSQP brute-force
optimization over all interval supports and general convex g-sequences;
the resulting values are frozen in ORACLE below.  A trimmed-down version
of that brute force re-runs here on a few small cases.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from hurdledag.bounds import choose_threshold, false_selection_bound, max_tail_rconcave

# (x, eta, B, r) -> independently optimized worst-case tail (8 decimals)
ORACLE = {
    (0.50, 0.30, 4, -0.25): 0.43958938,
    (0.75, 0.02, 4, -0.25): 0.00392502,
    (0.75, 0.10, 4, -0.25): 0.03606116,
    (0.75, 0.30, 4, -0.25): 0.18451226,
    (1.00, 0.02, 4, -0.25): 0.00112655,
    (1.00, 0.10, 4, -0.25): 0.01195219,
    (1.00, 0.30, 4, -0.25): 0.07592209,
    (0.50, 0.02, 6, -0.50): 0.01363955,
    (0.50, 0.10, 6, -0.50): 0.08118331,
    (0.50, 0.30, 6, -0.50): 0.35126677,
    (0.75, 0.02, 6, -0.50): 0.00399064,
    (0.75, 0.10, 6, -0.50): 0.02554213,
    (0.75, 0.30, 6, -0.50): 0.11765523,
    (1.00, 0.02, 6, -0.50): 0.00165171,
    (1.00, 0.10, 6, -0.50): 0.01077043,
    (1.00, 0.30, 6, -0.50): 0.05262603,
    (0.50, 0.02, 6, -0.25): 0.00755312,
    (0.50, 0.10, 6, -0.25): 0.06844133,
    (0.50, 0.30, 6, -0.25): 0.34935002,
    (0.75, 0.02, 6, -0.25): 0.00136437,
    (0.75, 0.10, 6, -0.25): 0.01654647,
    (0.75, 0.30, 6, -0.25): 0.11143992,
    (1.00, 0.02, 6, -0.25): 0.00048036,
    (1.00, 0.10, 6, -0.25): 0.00629586,
    (1.00, 0.30, 6, -0.25): 0.04854072,
    (0.50, 0.02, 8, -0.50): 0.01158297,
    (0.50, 0.10, 8, -0.50): 0.07142478,
    (0.50, 0.30, 8, -0.50): 0.31087180,
    (0.75, 0.02, 8, -0.50): 0.00456803,
    (0.75, 0.10, 8, -0.50): 0.02966179,
    (0.75, 0.30, 8, -0.50): 0.13904456,
    (1.00, 0.02, 8, -0.50): 0.00113350,
    (1.00, 0.10, 8, -0.50): 0.00755760,
    (1.00, 0.30, 8, -0.50): 0.03880062,
    (0.50, 0.02, 8, -0.25): 0.00525222,
    (0.50, 0.10, 8, -0.25): 0.05653946,
    (0.50, 0.30, 8, -0.25): 0.31080519,
    (0.75, 0.02, 8, -0.25): 0.00138790,
    (0.75, 0.10, 8, -0.25): 0.01879279,
    (0.75, 0.30, 8, -0.25): 0.13225148,
    (1.00, 0.02, 8, -0.25): 0.00026453,
    (1.00, 0.10, 8, -0.25): 0.00404058,
    (1.00, 0.30, 8, -0.25): 0.03533126,
}


def brute_force_tail(x, eta, B, r, n_starts=8, seed=0):
    """Direct constrained maximization over convex g-sequences, all supports."""
    rng = np.random.default_rng(seed)
    t = int(np.ceil(x * B - 1e-9))
    if t <= 0:
        return 1.0
    best = 0.0
    invr = 1.0 / r
    for lo, hi in itertools.combinations_with_replacement(range(B + 1), 2):
        if hi < t:
            continue
        n = hi - lo + 1
        idx = np.arange(lo, hi + 1, dtype=float)

        def neg_tail(g):
            p = np.maximum(g, 1e-12) ** invr
            return -np.sum(p[idx >= t])

        cons = [
            {"type": "eq", "fun": lambda g: np.sum(np.maximum(g, 1e-12) ** invr) - 1.0},
            {"type": "ineq",
             "fun": lambda g: eta * B - np.sum(idx * np.maximum(g, 1e-12) ** invr)},
        ]
        if n >= 3:
            mats = np.zeros((n - 2, n))
            for i in range(n - 2):
                mats[i, i], mats[i, i + 1], mats[i, i + 2] = 1.0, -2.0, 1.0
            cons.append({"type": "ineq", "fun": lambda g, M=mats: M @ g})
        starts = [rng.dirichlet(np.ones(n)) for _ in range(n_starts)] + [np.ones(n) / n]
        for rho in (0.2, 0.5, 2.0, 5.0):
            w = rho ** np.arange(n)
            starts.append(w / w.sum())
        for p0 in starts:
            g0 = np.asarray(p0) ** r
            try:
                res = minimize(neg_tail, g0, constraints=cons, method="SLSQP",
                               options={"maxiter": 300, "ftol": 1e-14})
            except Exception:
                continue
            if not res.success:
                continue
            p = np.maximum(res.x, 1e-12) ** invr
            if abs(p.sum() - 1.0) > 1e-7 or np.sum(idx * p) > eta * B + 1e-7:
                continue
            g = p**r
            if n >= 3 and np.min(g[:-2] - 2 * g[1:-1] + g[2:]) < -1e-7 * np.max(g):
                continue
            best = max(best, float(np.sum(p[idx >= t])))
    return best


# -- worst-case tail ---------------------------------------------------------------


def test_tail_matches_frozen_oracle():
    for (x, eta, B, r), want in ORACLE.items():
        got = max_tail_rconcave(x, eta, B, r)
        assert got == pytest.approx(want, rel=1e-4, abs=5e-8), (x, eta, B, r)


def test_tail_matches_fresh_brute_force_small_cases():
    for x, eta, B, r in [
        (0.5, 0.15, 4, -0.5),
        (0.75, 0.4, 4, -0.25),
        (1.0, 0.25, 5, -0.5),
        (0.6, 0.05, 5, -0.25),
    ]:
        got = max_tail_rconcave(x, eta, B, r)
        want = brute_force_tail(x, eta, B, r)
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9), (x, eta, B, r)


def test_tail_edge_cases():
    assert max_tail_rconcave(0.0, 0.1, 8, -0.5) == 1.0
    assert max_tail_rconcave(-0.2, 0.1, 8, -0.5) == 1.0
    assert max_tail_rconcave(1.2, 0.1, 8, -0.5) == 0.0
    assert max_tail_rconcave(0.5, 0.0, 8, -0.5) == 0.0
    # mean budget at or above the threshold: a point mass at x is feasible
    assert max_tail_rconcave(0.5, 0.5, 8, -0.5) == 1.0
    assert max_tail_rconcave(0.5, 0.9, 8, -0.25) == 1.0


def test_tail_validation():
    with pytest.raises(ValueError):
        max_tail_rconcave(0.5, 0.1, 8, 0.5)
    with pytest.raises(ValueError):
        max_tail_rconcave(0.5, 0.1, 0, -0.5)


def test_tail_single_trial_closed_form():
    # B=1, threshold at 1: maximize P(X=1) with mean <= eta puts eta at 1
    assert max_tail_rconcave(1.0, 0.3, 1, -0.5) == pytest.approx(0.3, abs=1e-9)


def test_tail_two_point_closed_form():
    # B=2, x=1, support {1/2, 1}: best feasible P(X=1) solves the mean equality;
    # support {0,1/2,1} with convexity allows more, so only a lower bound applies
    got = max_tail_rconcave(1.0, 0.25, 2, -0.5)
    assert got >= 0.25 / 2 - 1e-12
    assert got <= 0.25  # Markov at x=1
    assert got == pytest.approx(brute_force_tail(1.0, 0.25, 2, -0.5), rel=1e-6)


def test_tail_monotone_in_eta_and_x():
    etas = [0.02, 0.05, 0.1, 0.2, 0.3]
    vals = [max_tail_rconcave(0.75, e, 6, -0.5) for e in etas]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    xs = [0.3, 0.5, 0.7, 0.9, 1.0]
    vals = [max_tail_rconcave(x, 0.1, 6, -0.25) for x in xs]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_tail_never_exceeds_markov():
    # E X <= eta gives P(X >= x) <= eta / x regardless of shape constraints
    rng = np.random.default_rng(0)
    for _ in range(25):
        x = float(rng.uniform(0.1, 1.0))
        eta = float(rng.uniform(0.005, 0.5))
        B = int(rng.integers(2, 30))
        r = float(rng.choice([-0.5, -0.25]))
        got = max_tail_rconcave(x, eta, B, r)
        t = math.ceil(x * B - 1e-9)
        assert got <= eta * B / t + 1e-9 if t > 0 else got == 1.0
        assert 0.0 <= got <= 1.0


# -- combined false-selection bound ----------------------------------------------


def test_bound_is_min_of_terms():
    tau, q, p_total, B = 0.8, 2.0, 10, 25
    theta = q / p_total
    want = p_total * min(
        theta**2 / (2 * tau - 1),
        max_tail_rconcave(2 * tau - 1, theta**2, B, -0.5),
        max_tail_rconcave(tau, theta, 2 * B, -0.25),
        1.0,
    )
    assert false_selection_bound(tau, q, p_total, B) == pytest.approx(want, rel=1e-12)


def test_bound_validation_and_degenerate_inputs():
    with pytest.raises(ValueError):
        false_selection_bound(0.5, 1.0, 10, 25)
    with pytest.raises(ValueError):
        false_selection_bound(1.0001, 1.0, 10, 25)
    assert false_selection_bound(0.8, 0.0, 10, 25) == 0.0
    assert false_selection_bound(0.8, -1.0, 10, 25) == 0.0
    # saturated selection proportion is clipped to 1
    assert false_selection_bound(1.0, 99.0, 10, 25) <= 10.0


def test_bound_monotone_decreasing_in_tau():
    vals = [false_selection_bound(tau, 1.5, 15, 25) for tau in (0.55, 0.65, 0.8, 0.95)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


# -- threshold choice --------------------------------------------------------------


def test_choose_threshold_picks_smallest_qualifying_grid_point():
    B, p_total = 25, 10
    freqs = np.array([1.0, 0.9, 0.04, 0.0])
    q_hat = 0.8
    tau, bound, fdp = choose_threshold(freqs, q_hat, p_total, B, target_fdr=0.2)
    assert tau is not None
    j = round(tau * 2 * B)
    assert B + 1 <= j <= 2 * B
    assert fdp <= 0.2
    assert bound == pytest.approx(false_selection_bound(tau, q_hat, p_total, B), rel=1e-12)
    # every smaller grid threshold must fail the target
    for jj in range(B + 1, j):
        tt = jj / (2 * B)
        n_sel = max(1, int(np.sum(freqs > tt + 1e-12)))
        assert false_selection_bound(tt, q_hat, p_total, B) / n_sel > 0.2


def test_choose_threshold_quick_reject_agrees_with_full_scan():
    # the early-reject path must never change the outcome
    rng = np.random.default_rng(1)
    B, p_total = 20, 15
    for trial in range(5):
        freqs = rng.uniform(0, 1, size=p_total).round(2)
        q_hat = float(rng.uniform(0.1, 6.0))
        tau, bound, fdp = choose_threshold(freqs, q_hat, p_total, B, target_fdr=0.15)
        want = None
        for j in range(B + 1, 2 * B + 1):
            tt = j / (2 * B)
            n_sel = max(1, int(np.sum(freqs > tt + 1e-12)))
            b = false_selection_bound(tt, q_hat, p_total, B)
            if b / n_sel <= 0.15:
                want = (tt, b, b / n_sel)
                break
        if want is None:
            assert tau is None and bound == math.inf and fdp == math.inf
        else:
            assert tau == want[0]
            assert bound == pytest.approx(want[1], rel=1e-12)
            assert fdp == pytest.approx(want[2], rel=1e-12)


def test_choose_threshold_none_when_budget_unreachable():
    freqs = np.full(45, 0.9)
    tau, bound, fdp = choose_threshold(freqs, 40.0, 45, 25, target_fdr=0.01)
    assert tau is None and bound == math.inf and fdp == math.inf


def test_choose_threshold_zero_q_selects_smallest_grid_point():
    freqs = np.zeros(10)
    tau, bound, fdp = choose_threshold(freqs, 0.0, 10, 25, target_fdr=0.1)
    assert tau == pytest.approx(26 / 50)
    assert bound == 0.0 and fdp == 0.0


def test_choose_threshold_monotone_in_target():
    freqs = np.array([1.0, 1.0, 0.8, 0.6, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0])
    q_hat, p_total, B = 2.5, 10, 50
    taus = []
    for fdr in (0.02, 0.05, 0.1, 0.3):
        tau, _, _ = choose_threshold(freqs, q_hat, p_total, B, target_fdr=fdr)
        taus.append(tau if tau is not None else 2.0)
    assert all(a >= b - 1e-12 for a, b in zip(taus, taus[1:]))


def test_choose_threshold_validates_target():
    with pytest.raises(ValueError):
        choose_threshold(np.zeros(3), 1.0, 3, 10, target_fdr=0.0)
    with pytest.raises(ValueError):
        choose_threshold(np.zeros(3), 1.0, 3, 10, target_fdr=1.0)
