"""Recovery-rate study harness over generating/estimating parametrization grids.

One experiment crosses ground-truth models with estimating parametrizations,
sample sizes, search methods, and replicate indices.  Every (truth, n,
replicate) cell simulates one dataset that all estimators share, so
cross-parametrization comparisons are paired.  Cells checkpoint to one JSON
file each; re-running with the same spec and checkpoint directory skips
finished cells, and the long-format report CSV is rebuilt from checkpoints
so interrupted runs keep their partial results.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitConfig
from .graphs import compare
from .search import ScoreCache, _default_jobs, exhaustive_search, greedy_search
from .simulate import (
    Chain,
    Complete,
    GroundTruthSpec,
    Lattice,
    NormalizationSpec,
    Structure,
    ancestral_sample,
    build_truth,
    structure_dag,
)

__all__ = [
    "PARAM_NAMES",
    "ExperimentSpec",
    "run_experiment",
    "report_csv",
    "write_report",
]

# shared public names for the three parametrizations (generating form,
# estimating FitConfig): abk = canonical, pms = moment
PARAM_NAMES = {
    "abk-linear": ("canonical-linear", FitConfig(kind="canonical", degrees=(1,))),
    "pms-linear": ("moment-linear", FitConfig(kind="moment", degrees=(1,))),
    "pms-quadratic": ("moment-quadratic", FitConfig(kind="moment", degrees=(2,))),
}

METHODS = ("exhaustive", "greedy")

REPORT_COLUMNS = (
    "truth",
    "gen_param",
    "est_param",
    "method",
    "n",
    "replicate",
    "exact_match",
    "class_match",
    "shd",
    "seconds",
)


def structure_name(structure: Structure) -> str:
    if isinstance(structure, Chain):
        return f"chain-m{structure.m}"
    if isinstance(structure, Complete):
        return f"complete-m{structure.m}"
    return f"lattice-{structure.rows}x{structure.cols}"


def _structure_from_json(obj: dict) -> Structure:
    kind = obj.get("kind")
    if kind == "chain":
        return Chain(int(obj["m"]))
    if kind == "complete":
        return Complete(int(obj["m"]))
    if kind == "lattice":
        return Lattice(int(obj["rows"]), int(obj["cols"]))
    raise ValueError(f"unknown structure kind {kind!r}")


def _structure_to_json(structure: Structure) -> dict:
    if isinstance(structure, Chain):
        return {"kind": "chain", "m": structure.m}
    if isinstance(structure, Complete):
        return {"kind": "complete", "m": structure.m}
    return {"kind": "lattice", "rows": structure.rows, "cols": structure.cols}


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid definition: truths x estimators x sample sizes x replicates."""

    truths: tuple[GroundTruthSpec, ...]
    est_params: tuple[str, ...]
    ns: tuple[int, ...]
    replicates: int
    methods: tuple[str, ...] = ("exhaustive",)
    max_in_degree: int = 5
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.truths:
            raise ValueError("need at least one ground truth")
        for name in self.est_params:
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown estimating parametrization {name!r}")
        if not self.est_params:
            raise ValueError("need at least one estimating parametrization")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.ns or any(n < 1 for n in self.ns):
            raise ValueError("sample sizes must be positive")
        if list(self.ns) != sorted(set(self.ns)):
            raise ValueError("sample sizes must be strictly ascending")
        for mth in self.methods:
            if mth not in METHODS:
                raise ValueError(f"unknown method {mth!r}")
        if not self.methods:
            raise ValueError("need at least one method")

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExperimentSpec":
        raw_truths = obj.get("truths")
        if raw_truths is None:
            raw_truths = [obj["truth"]]
        gen_by_name = {v[0]: k for k, v in PARAM_NAMES.items()}
        truths = []
        for t in raw_truths:
            name = t["param"]
            if name in PARAM_NAMES:
                gen = PARAM_NAMES[name][0]
            elif name in gen_by_name:
                gen = name
            else:
                raise ValueError(f"unknown generating parametrization {name!r}")
            truths.append(
                GroundTruthSpec(
                    _structure_from_json(t["structure"]),
                    gen,
                    NormalizationSpec(bool(t.get("normalize", True))),
                    int(t.get("seed", 0)),
                )
            )
        return cls(
            truths=tuple(truths),
            est_params=tuple(obj["estimating"]),
            ns=tuple(int(n) for n in obj["n"]),
            replicates=int(obj["replicates"]),
            methods=tuple(obj.get("methods", ["exhaustive"])),
            max_in_degree=int(obj.get("max_in_degree", 5)),
            restarts=int(obj.get("restarts", 0)),
            seed=int(obj.get("seed", 0)),
        )

    def to_json_dict(self) -> dict:
        gen_by_name = {v[0]: k for k, v in PARAM_NAMES.items()}
        return {
            "truths": [
                {
                    "structure": _structure_to_json(t.structure),
                    "param": gen_by_name[t.parametrization],
                    "normalize": t.normalization.enabled,
                    "seed": t.seed,
                }
                for t in self.truths
            ],
            "estimating": list(self.est_params),
            "n": list(self.ns),
            "replicates": self.replicates,
            "methods": list(self.methods),
            "max_in_degree": self.max_in_degree,
            "restarts": self.restarts,
            "seed": self.seed,
        }


def _cell_rows(spec: ExperimentSpec, ti: int, ni: int, rep: int) -> list[dict]:
    """All report rows for one (truth, n, replicate) cell.

    The dataset is simulated once per cell from a seed derived from
    (spec.seed, cell coordinates) and shared by every estimator and method,
    pairing the comparisons.
    """
    truth_spec = spec.truths[ti]
    model = build_truth(truth_spec)
    true_dag = model.dag
    n = spec.ns[ni]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, ti, ni, rep]))
    data = ancestral_sample(model, n, rng)
    cap = min(spec.max_in_degree, true_dag.m - 1)
    gen_by_name = {v[0]: k for k, v in PARAM_NAMES.items()}
    rows: list[dict] = []
    for ei, est in enumerate(spec.est_params):
        config = PARAM_NAMES[est][1]
        cache = ScoreCache(data, config, cap)
        for method in spec.methods:
            t0 = time.perf_counter()
            if method == "exhaustive":
                result = exhaustive_search(cache)
            else:
                greedy_seed = int(
                    np.random.SeedSequence([spec.seed, ti, ni, rep, ei, 1])
                    .generate_state(1, dtype=np.uint64)[0]
                    >> 1
                )
                result = greedy_search(cache, restarts=spec.restarts, seed=greedy_seed)
            metrics = compare(true_dag, result.dag)
            rows.append(
                {
                    "truth": structure_name(truth_spec.structure),
                    "gen_param": gen_by_name[truth_spec.parametrization],
                    "est_param": est,
                    "method": method,
                    "n": n,
                    "replicate": rep,
                    "exact_match": int(metrics.exact_match),
                    "class_match": int(metrics.class_match),
                    "shd": metrics.shd,
                    "seconds": round(time.perf_counter() - t0, 6),
                }
            )
    return rows


def _checkpoint_path(dir_: str, spec: ExperimentSpec, ti: int, ni: int, rep: int) -> str:
    t = spec.truths[ti]
    name = f"{structure_name(t.structure)}_{t.parametrization}_n{spec.ns[ni]}_r{rep}.json"
    return os.path.join(dir_, name)


def _row_key(row: dict) -> tuple:
    return tuple(row[c] for c in ("truth", "gen_param", "est_param", "method", "n", "replicate"))


def report_csv(rows: list[dict]) -> str:
    """Long-format report, one row per (truth, est, method, n, replicate)."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in sorted(rows, key=_row_key):
        w.writerow(row)
    return buf.getvalue()


def write_report(rows: list[dict], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(report_csv(rows))
    os.replace(tmp, path)


def run_experiment(
    spec: ExperimentSpec,
    checkpoint_dir: str,
    report_path: str | None = None,
    n_jobs: int | None = None,
) -> list[dict]:
    """Run (or resume) the grid; returns the full list of report rows.

    Each cell's rows persist to ``checkpoint_dir`` as soon as the cell
    finishes; when ``report_path`` is given the CSV is rewritten after every
    completed cell (serially) or at the end (parallel), so interruption
    preserves all finished work.
    """
    os.makedirs(checkpoint_dir, exist_ok=True)
    cells = [
        (ti, ni, rep)
        for ti in range(len(spec.truths))
        for ni in range(len(spec.ns))
        for rep in range(spec.replicates)
    ]
    done_rows: list[dict] = []
    todo: list[tuple[int, int, int]] = []
    for cell in cells:
        path = _checkpoint_path(checkpoint_dir, spec, *cell)
        if os.path.exists(path):
            with open(path) as fh:
                done_rows.extend(json.load(fh))
        else:
            todo.append(cell)

    def finish(cell: tuple[int, int, int], rows: list[dict]) -> None:
        path = _checkpoint_path(checkpoint_dir, spec, *cell)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
        done_rows.extend(rows)

    n_jobs = n_jobs if n_jobs is not None else _default_jobs()
    if n_jobs > 1 and len(todo) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_cell_rows)(spec, *cell) for cell in todo)
        for cell, rows in zip(todo, results):
            finish(cell, rows)
        if report_path is not None:
            write_report(done_rows, report_path)
    else:
        try:
            for cell in todo:
                finish(cell, _cell_rows(spec, *cell))
                if report_path is not None:
                    write_report(done_rows, report_path)
        except BaseException:
            if report_path is not None and done_rows:
                write_report(done_rows, report_path)
            raise
        if report_path is not None:
            write_report(done_rows, report_path)
    return sorted(done_rows, key=_row_key)
