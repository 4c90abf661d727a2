"""Score-based DAG structure search over cached local BIC scores.

Two searchers share one score table:

* ``exhaustive_search``: exact minimum-BIC DAG by the sinks dynamic program
  over node subsets (best-parents propagation, then best-sink recursion),
  exponential in m but exact.
* ``greedy_search``: hill climbing over single-edge additions, deletions,
  and reversals, steepest descent with deterministic tie-breaking, with
  optional random restarts.

Local scores are BIC values of per-node conditional fits; the cache fills
lazily (greedy touches a sparse subset) or exhaustively (the DP needs every
parent set up to the in-degree cap), optionally in parallel.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .fitting import FitConfig, FitError, local_score
from .graphs import Dag

__all__ = ["ScoreCache", "SearchResult", "build_cache", "exhaustive_search", "greedy_search"]


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("HURDLEDAG_JOBS", "1")))
    except ValueError:
        return 1


class ScoreCache:
    """Memoized local BIC scores keyed by (node, parent set).

    Nodes are positions into ``node_ids`` (columns of the dataset that act
    as graph nodes); covariate columns from the config are appended to every
    fit but never appear in parent sets.  Failed fits score +inf.
    """

    def __init__(
        self,
        data: Dataset,
        config: FitConfig,
        max_in_degree: int,
        node_ids: Sequence[int] | None = None,
    ):
        self.data = data
        self.config = config
        all_ids = tuple(i for i in range(data.m) if i not in set(config.covariate_ids))
        self.node_ids = tuple(node_ids) if node_ids is not None else all_ids
        if set(self.node_ids) & set(config.covariate_ids):
            raise ValueError("covariate columns cannot be graph nodes")
        self.m = len(self.node_ids)
        if not 0 <= max_in_degree <= self.m - 1:
            raise ValueError(f"max_in_degree must be in [0, {self.m - 1}]")
        self.max_in_degree = max_in_degree
        self._scores: dict[tuple[int, frozenset[int]], float] = {}
        self._meta: dict[tuple[int, frozenset[int]], dict] = {}
        self.hits = 0
        self.misses = 0
        self.data_fingerprint = self._fingerprint_data(data)
        self.config_fingerprint = repr((config, max_in_degree, self.node_ids))

    @staticmethod
    def _fingerprint_data(data: Dataset) -> str:
        h = hashlib.sha256()
        h.update(",".join(data.labels).encode())
        h.update(np.ascontiguousarray(data.values).tobytes())
        return h.hexdigest()

    def _compute(self, v: int, parents: frozenset[int]) -> tuple[float, dict]:
        cols = tuple(sorted(self.node_ids[u] for u in parents))
        try:
            fit = local_score(self.data, self.node_ids[v], cols, self.config)
            return fit.bic, {"degree": fit.degree_used, "nu": fit.nu, "loglik": fit.loglik}
        except FitError as e:
            return math.inf, {"error": str(e)}

    def score(self, v: int, parents: Iterable[int]) -> float:
        key = (v, frozenset(parents))
        if len(key[1]) > self.max_in_degree:
            raise ValueError(f"parent set exceeds in-degree cap {self.max_in_degree}")
        if key in self._scores:
            self.hits += 1
            return self._scores[key]
        self.misses += 1
        bic, meta = self._compute(*key)
        self._scores[key] = bic
        self._meta[key] = meta
        return bic

    def meta(self, v: int, parents: Iterable[int]) -> dict:
        key = (v, frozenset(parents))
        if key not in self._meta:
            self.score(v, parents)
        return self._meta[key]

    def fill(self, n_jobs: int | None = None) -> "ScoreCache":
        """Compute every (node, parent set) entry up to the in-degree cap."""
        keys = [
            (v, frozenset(S))
            for v in range(self.m)
            for r in range(self.max_in_degree + 1)
            for S in itertools.combinations((u for u in range(self.m) if u != v), r)
        ]
        todo = [k for k in keys if k not in self._scores]
        n_jobs = n_jobs if n_jobs is not None else _default_jobs()
        if n_jobs > 1 and len(todo) > 8:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=n_jobs)(delayed(self._compute)(v, S) for v, S in todo)
        else:
            results = [self._compute(v, S) for v, S in todo]
        for key, (bic, meta) in zip(todo, results):
            self._scores[key] = bic
            self._meta[key] = meta
        self.misses += len(todo)
        return self

    @property
    def n_entries(self) -> int:
        return len(self._scores)


def build_cache(
    data: Dataset,
    config: FitConfig,
    max_in_degree: int,
    node_ids: Sequence[int] | None = None,
    n_jobs: int | None = None,
) -> ScoreCache:
    """Precompute the full local-score table (parallel when n_jobs > 1)."""
    return ScoreCache(data, config, max_in_degree, node_ids).fill(n_jobs)


@dataclass(frozen=True)
class SearchResult:
    """A search outcome; total_bic always equals the sum of local scores."""

    dag: Dag
    total_bic: float
    parent_sets: tuple[tuple[int, ...], ...]
    degrees: tuple[int, ...]
    method: str
    trace: tuple = ()
    wall_time: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "dag": self.dag.to_json_dict(),
            "total_bic": self.total_bic,
            "parent_sets": [list(s) for s in self.parent_sets],
            "degrees": list(self.degrees),
            "method": self.method,
            "trace": list(self.trace),
            "wall_time": self.wall_time,
        }


def _result(cache: ScoreCache, parents: list[frozenset[int]], method: str, trace: tuple, t0: float) -> SearchResult:
    total = sum(cache.score(v, parents[v]) for v in range(cache.m))
    degrees = tuple(cache.meta(v, parents[v]).get("degree", 0) for v in range(cache.m))
    labels = tuple(cache.data.labels[i] for i in cache.node_ids)
    dag = Dag(cache.m, tuple(tuple(sorted(p)) for p in parents), labels)
    return SearchResult(
        dag,
        total,
        tuple(tuple(sorted(p)) for p in parents),
        degrees,
        method,
        trace,
        time.perf_counter() - t0,
    )


# -- exhaustive search ----------------------------------------------------------


def exhaustive_search(cache: ScoreCache, n_jobs: int | None = None) -> SearchResult:
    """Global minimum-BIC DAG via the sinks dynamic program.

    best_parents(v, C) is computed by subset propagation from the scored
    parent sets (|S| <= cap), then cost(W) = min over sinks s of
    cost(W \\ s) + best_parents(s, W \\ s).  Exponential in m; refuses m > 20.
    """
    m = cache.m
    if m > 20:
        raise ValueError(f"exhaustive search supports m <= 20, got {m}")
    t0 = time.perf_counter()
    cache.fill(n_jobs)

    full = (1 << m) - 1
    # per-node best achievable score over any parent subset of the candidate mask
    bp_score = [np.full(1 << m, math.inf) for _ in range(m)]
    bp_set = [np.zeros(1 << m, dtype=np.int64) for _ in range(m)]
    for v in range(m):
        others = [u for u in range(m) if u != v]
        score_v = bp_score[v]
        set_v = bp_set[v]
        for r in range(cache.max_in_degree + 1):
            for S in itertools.combinations(others, r):
                mask = 0
                for u in S:
                    mask |= 1 << u
                s = cache.score(v, S)
                if s < score_v[mask]:
                    score_v[mask] = s
                    set_v[mask] = mask
        if not np.isfinite(score_v[0]):
            raise FitError(f"all fits failed for node {cache.node_ids[v]} (empty parent set)")
        for mask in range(1 << m):
            if mask & (1 << v):
                continue
            rest = mask
            while rest:
                low = rest & (-rest)
                prev = mask ^ low
                if score_v[prev] < score_v[mask]:
                    score_v[mask] = score_v[prev]
                    set_v[mask] = set_v[prev]
                rest ^= low

    cost = np.full(1 << m, math.inf)
    sink = np.full(1 << m, -1, dtype=np.int64)
    cost[0] = 0.0
    for W in range(1, 1 << m):
        rest = W
        while rest:
            low = rest & (-rest)
            s = low.bit_length() - 1
            prev = W ^ low
            c = cost[prev] + bp_score[s][prev]
            if c < cost[W]:
                cost[W] = c
                sink[W] = s
            rest ^= low
    if not math.isfinite(cost[full]):
        raise FitError("dynamic program found no finite-score ordering")

    parents: list[frozenset[int]] = [frozenset()] * m
    W = full
    while W:
        s = int(sink[W])
        W ^= 1 << s
        mask = int(bp_set[s][W])
        parents[s] = frozenset(u for u in range(m) if mask & (1 << u))
    trace = (("subsets", 1 << m), ("entries", cache.n_entries))
    return _result(cache, parents, "exhaustive", trace, t0)


# -- greedy search ----------------------------------------------------------------


def _reachability(parents: list[frozenset[int]], m: int) -> list[set[int]]:
    """reach[u] = set of nodes reachable from u by directed edges (u -> child)."""
    children: list[list[int]] = [[] for _ in range(m)]
    for v in range(m):
        for u in parents[v]:
            children[u].append(v)
    reach: list[set[int]] = [set() for _ in range(m)]
    for start in range(m):
        seen = reach[start]
        stack = list(children[start])
        while stack:
            w = stack.pop()
            if w not in seen:
                seen.add(w)
                stack.extend(children[w])
    return reach


def _path_avoiding_edge(parents: list[frozenset[int]], m: int, src: int, dst: int) -> bool:
    """True iff a directed path src -> ... -> dst exists ignoring the edge src->dst."""
    children: list[list[int]] = [[] for _ in range(m)]
    for v in range(m):
        for u in parents[v]:
            if u == src and v == dst:
                continue
            children[u].append(v)
    stack = [src]
    seen = set()
    while stack:
        w = stack.pop()
        for c in children[w]:
            if c == dst:
                return True
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


_MOVE_RANK = {"delete": 0, "reverse": 1, "add": 2}


def _greedy_run(cache: ScoreCache, init: list[frozenset[int]]) -> tuple[list[frozenset[int]], list]:
    m = cache.m
    cap = cache.max_in_degree
    parents = list(init)
    node_score = [cache.score(v, parents[v]) for v in range(m)]
    trace: list = []
    while True:
        reach = _reachability(parents, m)
        best: tuple[float, int, int, int] | None = None  # (delta, rank, u, v)
        best_move: tuple[str, int, int] | None = None
        for v in range(m):
            for u in range(m):
                if u == v:
                    continue
                if u in parents[v]:
                    # delete u -> v
                    delta = cache.score(v, parents[v] - {u}) - node_score[v]
                    key = (delta, _MOVE_RANK["delete"], u, v)
                    if best is None or key < best:
                        best, best_move = key, ("delete", u, v)
                    # reverse u -> v (becomes v -> u)
                    if len(parents[u]) < cap and not _path_avoiding_edge(parents, m, u, v):
                        delta = (
                            cache.score(v, parents[v] - {u})
                            - node_score[v]
                            + cache.score(u, parents[u] | {v})
                            - node_score[u]
                        )
                        key = (delta, _MOVE_RANK["reverse"], u, v)
                        if best is None or key < best:
                            best, best_move = key, ("reverse", u, v)
                else:
                    # add u -> v
                    if len(parents[v]) >= cap or u in reach[v]:
                        continue
                    delta = cache.score(v, parents[v] | {u}) - node_score[v]
                    key = (delta, _MOVE_RANK["add"], u, v)
                    if best is None or key < best:
                        best, best_move = key, ("add", u, v)
        if best is None or best[0] >= -1e-9:
            break
        kind, u, v = best_move
        if kind == "add":
            parents[v] = parents[v] | {u}
        elif kind == "delete":
            parents[v] = parents[v] - {u}
        else:
            parents[v] = parents[v] - {u}
            parents[u] = parents[u] | {v}
            node_score[u] = cache.score(u, parents[u])
        node_score[v] = cache.score(v, parents[v])
        trace.append((kind, u, v, best[0]))
    return parents, trace


def _random_init(rng: np.random.Generator, m: int, cap: int) -> list[frozenset[int]]:
    """Random DAG: random topological order, each admissible edge kept w.p. 0.3."""
    order = rng.permutation(m)
    parents: list[set[int]] = [set() for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            u, v = int(order[i]), int(order[j])
            if len(parents[v]) < cap and rng.random() < 0.3:
                parents[v].add(u)
    return [frozenset(p) for p in parents]


def greedy_search(
    cache: ScoreCache,
    init: Dag | None = None,
    restarts: int = 0,
    seed: int = 0,
) -> SearchResult:
    """Steepest-descent hill climbing over add/delete/reverse moves.

    Accepts the move with the largest BIC decrease while it exceeds 1e-9;
    ties break by move type (delete < reverse < add) then by (u, v).  With
    restarts > 0, additional runs start from seeded random DAGs and the best
    final score wins (the deterministic empty-start run is always included).
    """
    t0 = time.perf_counter()
    m = cache.m
    if init is None:
        start = [frozenset() for _ in range(m)]
    else:
        if init.m != m:
            raise ValueError("initial graph node count mismatch")
        if any(len(p) > cache.max_in_degree for p in init.parents):
            raise ValueError("initial graph violates the in-degree cap")
        start = [frozenset(p) for p in init.parents]

    runs: list[tuple[float, int, list[frozenset[int]], list]] = []
    parents, trace = _greedy_run(cache, start)
    runs.append((sum(cache.score(v, parents[v]) for v in range(m)), 0, parents, trace))
    if restarts > 0:
        seeds = np.random.SeedSequence(seed).spawn(restarts)
        for r, ss in enumerate(seeds, start=1):
            rng = np.random.default_rng(ss)
            parents, trace = _greedy_run(cache, _random_init(rng, m, cache.max_in_degree))
            runs.append((sum(cache.score(v, parents[v]) for v in range(m)), r, parents, trace))
    total, _, parents, trace = min(runs, key=lambda r: (r[0], r[1]))
    return _result(cache, parents, "greedy", tuple(trace), t0)
