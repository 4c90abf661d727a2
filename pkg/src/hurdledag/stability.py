"""Complementary-pairs stability selection over repeated greedy searches.

The data rows are split B times into complementary halves of size
floor(n/2) (one random row dropped first when n is odd); a greedy DAG
search runs on each of the 2B halves with its own score cache, and each
directed edge's selection frequency is the fraction of successful runs
containing it.  The false-selection bound from ``bounds`` converts the
frequencies into the smallest threshold tau whose estimated false
discovery proportion stays within the target; edges with frequency
strictly above tau form the final graph.  If thresholding leaves a cycle,
the ``raise`` policy lifts tau to the next attained frequency level until
the graph is acyclic (possibly empty), while ``asis`` returns the cyclic
edge set unchanged with ``dag`` unset.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bounds import choose_threshold
from .data import Dataset
from .fitting import FitConfig, FitError
from .graphs import CycleError, Dag
from .search import ScoreCache, _default_jobs, greedy_search

__all__ = [
    "POLICIES",
    "StabilityConfig",
    "StabilityResult",
    "subsample_pairs",
    "edge_frequencies",
    "threshold_and_assemble",
    "stability_select",
]

POLICIES = ("asis", "raise")


@dataclass(frozen=True)
class StabilityConfig:
    """Settings for stability selection around the greedy searcher."""

    B: int = 50
    target_fdr: float = 0.10
    policy: str = "raise"
    fit: FitConfig = FitConfig()
    max_in_degree: int = 5
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0.0 < self.target_fdr < 1.0:
            raise ValueError("target_fdr must be in (0, 1)")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")


@dataclass(frozen=True)
class StabilityResult:
    """Edge frequencies plus the thresholded final graph.

    ``dag`` is None only under the ``asis`` policy when the kept edge set
    is cyclic; ``threshold`` is None when no edge was ever selected or no
    grid threshold met the target.  ``n_runs`` counts successful searches
    (the frequency denominator); ``n_planned`` is 2B.
    """

    labels: tuple[str, ...]
    frequencies: tuple[tuple[str, str, float], ...]
    threshold: float | None
    edges: tuple[tuple[str, str], ...]
    dag: Dag | None
    q_hat: float
    n_runs: int
    n_planned: int
    bound: float | None
    fdp_estimate: float | None
    repair: tuple[str, ...] = ()
    failures: tuple[str, ...] = ()
    wall_time: float = 0.0

    @property
    def is_acyclic(self) -> bool:
        return self.dag is not None

    @property
    def frequency_map(self) -> dict[tuple[str, str], float]:
        return {(u, v): f for u, v, f in self.frequencies}

    def to_dot(self, name: str = "stability") -> str:
        out = [f"digraph {name} {{"]
        for lab in self.labels:
            out.append(f'  "{lab}";')
        for u, v in sorted(self.edges):
            out.append(f'  "{u}" -> "{v}";')
        out.append("}")
        return "\n".join(out) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "frequencies": [
                {"from": u, "to": v, "frequency": f} for u, v, f in self.frequencies
            ],
            "threshold": self.threshold,
            "edges": [[u, v] for u, v in self.edges],
            "acyclic": self.is_acyclic,
            "q_hat": self.q_hat,
            "n_runs": self.n_runs,
            "n_planned": self.n_planned,
            "bound": None if self.bound is None or not np.isfinite(self.bound) else self.bound,
            "fdp_estimate": None
            if self.fdp_estimate is None or not np.isfinite(self.fdp_estimate)
            else self.fdp_estimate,
            "repair": list(self.repair),
            "failures": list(self.failures),
            "wall_time": self.wall_time,
        }


def subsample_pairs(n: int, B: int, rng: np.random.Generator) -> list[np.ndarray]:
    """B complementary pairs of row-index sets, each of size floor(n/2).

    When n is odd one uniformly chosen row is dropped before any split, so
    all 2B sets have exactly floor(n/2) rows and each pair partitions the
    trimmed sample.
    """
    if n < 4:
        raise ValueError("need at least 4 samples to subsample")
    if B < 1:
        raise ValueError("B must be >= 1")
    idx = np.arange(n)
    if n % 2 == 1:
        idx = np.delete(idx, int(rng.integers(n)))
    half = idx.size // 2
    out: list[np.ndarray] = []
    for _ in range(B):
        perm = rng.permutation(idx)
        out.append(np.sort(perm[:half]))
        out.append(np.sort(perm[half:]))
    return out


def _run_one(
    data: Dataset,
    rows: np.ndarray,
    config: FitConfig,
    max_in_degree: int,
    node_ids: tuple[int, ...] | None,
    restarts: int,
    seed: int,
) -> tuple[str, object]:
    """One greedy search on a row subset; never raises (failures are data)."""
    try:
        sub = Dataset(data.values[rows], data.labels)
        cache = ScoreCache(sub, config, max_in_degree, node_ids)
        res = greedy_search(cache, restarts=restarts, seed=seed)
        dag = res.dag
        return "ok", tuple((dag.label_of(u), dag.label_of(v)) for u, v in dag.edges())
    except (FitError, np.linalg.LinAlgError, ValueError) as e:
        return "fail", f"{type(e).__name__}: {e}"


def edge_frequencies(
    data: Dataset,
    pairs: Sequence[np.ndarray],
    config: FitConfig,
    max_in_degree: int,
    restarts: int = 0,
    seed: int = 0,
    node_ids: Sequence[int] | None = None,
    n_jobs: int | None = None,
) -> tuple[dict[tuple[str, str], float], float, int, tuple[str, ...]]:
    """Directed-edge selection frequencies over the subsample searches.

    Returns (frequency map, q_hat, n_successful_runs, failure messages).
    Each run gets an independent score cache and a seed derived from
    (seed, run index); failed runs are excluded from the denominator.
    """
    ids = tuple(node_ids) if node_ids is not None else None
    task_seeds = [
        int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
        for ss in np.random.SeedSequence(seed).spawn(len(pairs))
    ]
    n_jobs = n_jobs if n_jobs is not None else _default_jobs()
    if n_jobs > 1 and len(pairs) > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(
            delayed(_run_one)(data, rows, config, max_in_degree, ids, restarts, s)
            for rows, s in zip(pairs, task_seeds)
        )
    else:
        outcomes = [
            _run_one(data, rows, config, max_in_degree, ids, restarts, s)
            for rows, s in zip(pairs, task_seeds)
        ]

    counts: dict[tuple[str, str], int] = {}
    n_success = 0
    total_edges = 0
    failures: list[str] = []
    for status, payload in outcomes:
        if status == "ok":
            n_success += 1
            total_edges += len(payload)
            for e in payload:
                counts[e] = counts.get(e, 0) + 1
        else:
            failures.append(str(payload))
    if failures:
        warnings.warn(
            f"{len(failures)} of {len(pairs)} subsample searches failed; "
            f"frequencies use denominator {n_success}",
            stacklevel=2,
        )
    if n_success == 0:
        raise FitError("every subsample search failed", {"failures": tuple(failures)})
    freqs = {e: c / n_success for e, c in counts.items()}
    q_hat = total_edges / n_success
    return freqs, q_hat, n_success, tuple(failures)


def _acyclic(edges: Sequence[tuple[str, str]], labels: Sequence[str]) -> Dag | None:
    pos = {lab: i for i, lab in enumerate(labels)}
    try:
        return Dag.from_edges(len(labels), [(pos[u], pos[v]) for u, v in edges], labels)
    except CycleError:
        return None


def threshold_and_assemble(
    frequencies: Mapping[tuple[str, str], float],
    q_hat: float,
    labels: Sequence[str],
    config: StabilityConfig,
    n_runs: int | None = None,
    failures: Sequence[str] = (),
    wall_time: float = 0.0,
) -> StabilityResult:
    """Threshold the frequency map into a final graph.

    p_total = m(m-1)/2 selectable parameters; the chosen tau is the
    smallest grid value whose bound / max(1, #selected) is within
    target_fdr; kept edges have frequency strictly above tau.
    """
    labels = tuple(labels)
    m = len(labels)
    p_total = m * (m - 1) // 2
    freq_items = tuple(sorted((u, v, float(f)) for (u, v), f in frequencies.items()))
    n_runs = n_runs if n_runs is not None else 2 * config.B
    repair: list[str] = []

    threshold: float | None
    bound: float | None
    fdp: float | None
    if q_hat <= 0:
        threshold, bound, fdp = None, None, None
        edges: tuple[tuple[str, str], ...] = ()
        repair.append("no edges selected in any run; threshold undefined")
    else:
        values = np.array([f for _, _, f in freq_items]) if freq_items else np.zeros(0)
        tau, bound_v, fdp_v = choose_threshold(
            values, q_hat, p_total, config.B, config.target_fdr
        )
        if tau is None:
            threshold, bound, fdp = None, None, None
            edges = ()
            repair.append("no threshold met the target FDR; returning the empty graph")
        else:
            threshold, bound, fdp = tau, bound_v, fdp_v
            edges = tuple((u, v) for u, v, f in freq_items if f > tau + 1e-12)

    dag = _acyclic(edges, labels)
    if dag is None:
        if config.policy == "raise":
            levels = sorted({f for _, _, f in freq_items})
            while dag is None:
                higher = [x for x in levels if x > threshold + 1e-12]
                new_tau = higher[0] if higher else 1.0
                repair.append(f"cycle at threshold {threshold:.6g}; raised to {new_tau:.6g}")
                threshold = new_tau
                edges = tuple((u, v) for u, v, f in freq_items if f > threshold + 1e-12)
                dag = _acyclic(edges, labels)
        else:
            repair.append("selected edge set is cyclic; returned as is")

    return StabilityResult(
        labels=labels,
        frequencies=freq_items,
        threshold=threshold,
        edges=edges,
        dag=dag,
        q_hat=float(q_hat),
        n_runs=int(n_runs),
        n_planned=2 * config.B,
        bound=bound,
        fdp_estimate=fdp,
        repair=tuple(repair),
        failures=tuple(failures),
        wall_time=wall_time,
    )


def stability_select(
    data: Dataset,
    config: StabilityConfig,
    node_ids: Sequence[int] | None = None,
    n_jobs: int | None = None,
) -> StabilityResult:
    """Full stability-selection pipeline on one dataset.

    Subsampling and the per-run search seeds derive from config.seed, so a
    fixed seed reproduces the result bit for bit regardless of n_jobs.
    """
    t0 = time.perf_counter()
    ss_sub, ss_runs = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(ss_sub)
    pairs = subsample_pairs(data.n, config.B, rng)
    run_seed = int(ss_runs.generate_state(1, dtype=np.uint64)[0] >> 1)
    ids = (
        tuple(node_ids)
        if node_ids is not None
        else tuple(i for i in range(data.m) if i not in set(config.fit.covariate_ids))
    )
    freqs, q_hat, n_success, failures = edge_frequencies(
        data,
        pairs,
        config.fit,
        min(config.max_in_degree, len(ids) - 1),
        restarts=config.restarts,
        seed=run_seed,
        node_ids=ids,
        n_jobs=n_jobs,
    )
    labels = tuple(data.labels[i] for i in ids)
    return threshold_and_assemble(
        freqs,
        q_hat,
        labels,
        config,
        n_runs=n_success,
        failures=failures,
        wall_time=time.perf_counter() - t0,
    )
