"""Command-line interface: simulate, fit, search, stability, experiment.

Artifacts are deterministic for a fixed seed and config; the only
run-dependent JSON/CSV fields are the timing ones (``wall_time`` and
``seconds``).  Exit codes: 0 on success, 2 for configuration or input
errors, 3 for numeric failures inside a fit or search.
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from . import __version__
from .data import Dataset
from .experiment import PARAM_NAMES, ExperimentSpec, run_experiment
from .fitting import FitConfig, FitError, local_score
from .search import ScoreCache, exhaustive_search, greedy_search
from .simulate import (
    Chain,
    Complete,
    GroundTruthSpec,
    Lattice,
    NormalizationSpec,
    build_truth,
    ancestral_sample,
)
from .stability import POLICIES, StabilityConfig, stability_select

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

EST_KINDS = {"abk": "canonical", "pms": "moment"}


def _guarded(fn):
    """Map exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FitError, np.linalg.LinAlgError, FloatingPointError) as e:
            click.echo(f"numeric failure: {e}", err=True)
            sys.exit(EXIT_NUMERIC)
        except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _json_text(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _parse_names(csv_arg: str | None) -> tuple[str, ...]:
    if not csv_arg:
        return ()
    return tuple(s.strip() for s in csv_arg.split(",") if s.strip())


def _column_ids(data: Dataset, names: tuple[str, ...]) -> tuple[int, ...]:
    pos = {lab: i for i, lab in enumerate(data.labels)}
    missing = [n for n in names if n not in pos]
    if missing:
        raise ValueError(f"unknown column names: {', '.join(missing)}")
    return tuple(pos[n] for n in names)


def _parse_degrees(text: str) -> tuple[int, ...]:
    try:
        degrees = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ValueError(f"cannot parse degree list {text!r}")
    if not degrees:
        raise ValueError("degree list is empty")
    return degrees


def _fit_config(param: str, degrees: str, ridge: float, covariate_ids: tuple[int, ...]) -> FitConfig:
    return FitConfig(
        kind=EST_KINDS[param],
        degrees=_parse_degrees(degrees),
        ridge=ridge,
        covariate_ids=covariate_ids,
    )


def _load_data(path: str, zero_tol: float) -> Dataset:
    return Dataset.from_csv(path, zero_tol=zero_tol)


@click.group()
@click.version_option(__version__, prog_name="hurdledag")
def main():
    """Structure learning for zero-inflated continuous data."""


# -- simulate ----------------------------------------------------------------------


@main.command()
@click.option("--structure", type=click.Choice(["chain", "complete", "lattice"]), required=True)
@click.option("--m", "m_nodes", type=int, default=None, help="Node count (chain/complete).")
@click.option("--rows", type=int, default=None, help="Lattice rows.")
@click.option("--cols", type=int, default=None, help="Lattice columns.")
@click.option("--param", type=click.Choice(sorted(PARAM_NAMES)), required=True)
@click.option("--n", "n_rows", type=int, required=True, help="Sample size.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--normalize", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--out", required=True, help="Output prefix; writes <out>.csv and <out>.model.json.")
@_guarded
def simulate(structure, m_nodes, rows, cols, param, n_rows, seed, normalize, out):
    """Sample a synthetic dataset from a benchmark ground-truth model."""
    if structure == "lattice":
        if rows is None or cols is None:
            raise ValueError("lattice needs --rows and --cols")
        struct = Lattice(rows, cols)
    else:
        if m_nodes is None:
            raise ValueError(f"{structure} needs --m")
        struct = Chain(m_nodes) if structure == "chain" else Complete(m_nodes)
    gen = PARAM_NAMES[param][0]
    spec = GroundTruthSpec(struct, gen, NormalizationSpec(normalize == "on"), seed)
    model = build_truth(spec)
    # child 0 of the root seed drives the normalization pilot inside
    # build_truth; child 1 is reserved for the actual sample
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    data = ancestral_sample(model, n_rows, rng)
    data.to_csv(f"{out}.csv")
    _write(
        f"{out}.model.json",
        _json_text({"spec": {"structure": structure, "param": param, "normalize": normalize, "seed": seed}, "model": model.to_json_dict()}),
    )
    click.echo(f"wrote {out}.csv ({data.n} rows, {data.m} columns) and {out}.model.json")


# -- fit ---------------------------------------------------------------------------


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--node", required=True, help="Response column name.")
@click.option("--parents", default="", help="Comma-separated parent column names.")
@click.option("--param", type=click.Choice(sorted(EST_KINDS)), default="pms", show_default=True)
@click.option("--degrees", default="1,2,3", show_default=True, help="Candidate polynomial degrees.")
@click.option("--ridge", type=float, default=1e-4, show_default=True)
@click.option("--covariates", default="", help="Columns added as regressors, never nodes.")
@click.option("--zero-tol", type=float, default=0.0, show_default=True)
@click.option("--out", default=None, help="Output JSON path (default: stdout).")
@_guarded
def fit(data_path, node, parents, param, degrees, ridge, covariates, zero_tol, out):
    """Fit one node's conditional given an explicit parent set."""
    data = _load_data(data_path, zero_tol)
    node_id = _column_ids(data, (node,))[0]
    parent_names = _parse_names(parents)
    parent_ids = _column_ids(data, parent_names)
    cov_ids = _column_ids(data, _parse_names(covariates))
    if node_id in parent_ids:
        raise ValueError("node cannot be its own parent")
    config = _fit_config(param, degrees, ridge, cov_ids)
    result = local_score(data, node_id, parent_ids, config)
    payload = {"node": node, "parents": list(parent_names), "fit": result.to_json_dict()}
    text = _json_text(payload)
    if out:
        _write(out, text)
        click.echo(f"wrote {out} (bic {result.bic:.6g}, degree {result.degree_used})")
    else:
        click.echo(text, nl=False)


# -- search ------------------------------------------------------------------------


def _search_result(data, method, param, degrees, ridge, max_in_degree, restarts, seed, subset, covariates, jobs):
    cov_ids = _column_ids(data, _parse_names(covariates))
    config = _fit_config(param, degrees, ridge, cov_ids)
    subset_names = _parse_names(subset)
    node_ids = _column_ids(data, subset_names) if subset_names else None
    if node_ids is not None and set(node_ids) & set(cov_ids):
        raise ValueError("subset and covariates overlap")
    n_nodes = len(node_ids) if node_ids is not None else data.m - len(cov_ids)
    cap = min(max_in_degree, n_nodes - 1)
    cache = ScoreCache(data, config, cap, node_ids)
    if method == "exhaustive":
        return exhaustive_search(cache, n_jobs=jobs)
    return greedy_search(cache, restarts=restarts, seed=seed)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["exhaustive", "greedy"]), default="greedy", show_default=True)
@click.option("--param", type=click.Choice(sorted(EST_KINDS)), default="pms", show_default=True)
@click.option("--degrees", default="1,2,3", show_default=True)
@click.option("--ridge", type=float, default=1e-4, show_default=True)
@click.option("--max-in-degree", type=int, default=5, show_default=True)
@click.option("--restarts", type=int, default=0, show_default=True, help="Greedy random restarts.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--subset", default="", help="Restrict the graph to these columns.")
@click.option("--covariates", default="", help="Columns added as regressors, never nodes.")
@click.option("--zero-tol", type=float, default=0.0, show_default=True)
@click.option("--jobs", type=int, default=None, help="Parallel score fits (default: HURDLEDAG_JOBS).")
@click.option("--out", required=True, help="Output prefix; writes <out>.json and <out>.dot.")
@_guarded
def search(data_path, method, param, degrees, ridge, max_in_degree, restarts, seed, subset, covariates, zero_tol, jobs, out):
    """Estimate a DAG by exhaustive dynamic programming or greedy hill climbing."""
    data = _load_data(data_path, zero_tol)
    result = _search_result(
        data, method, param, degrees, ridge, max_in_degree, restarts, seed, subset, covariates, jobs
    )
    _write(f"{out}.json", _json_text(result.to_json_dict()))
    _write(f"{out}.dot", result.dag.to_dot())
    click.echo(
        f"{method}: bic {result.total_bic:.6g}, {result.dag.n_edges} edges; wrote {out}.json and {out}.dot"
    )


# -- stability ---------------------------------------------------------------------


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "--B", "n_pairs", type=int, default=50, show_default=True, help="Complementary pairs.")
@click.option("--fdr", type=float, default=0.10, show_default=True, help="Target false discovery rate.")
@click.option("--policy", type=click.Choice(list(POLICIES)), default="raise", show_default=True)
@click.option("--param", type=click.Choice(sorted(EST_KINDS)), default="pms", show_default=True)
@click.option("--degrees", default="1,2,3", show_default=True)
@click.option("--ridge", type=float, default=1e-4, show_default=True)
@click.option("--max-in-degree", type=int, default=5, show_default=True)
@click.option("--restarts", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--subset", default="", help="Restrict the graph to these columns.")
@click.option("--covariates", default="", help="Columns added as regressors, never nodes.")
@click.option("--zero-tol", type=float, default=0.0, show_default=True)
@click.option("--jobs", type=int, default=None, help="Parallel subsample searches.")
@click.option("--out", required=True, help="Output prefix; writes <out>.json and <out>.dot.")
@_guarded
def stability(data_path, n_pairs, fdr, policy, param, degrees, ridge, max_in_degree, restarts, seed, subset, covariates, zero_tol, jobs, out):
    """Stability selection: subsampled greedy searches plus FDR thresholding."""
    data = _load_data(data_path, zero_tol)
    cov_ids = _column_ids(data, _parse_names(covariates))
    subset_names = _parse_names(subset)
    node_ids = _column_ids(data, subset_names) if subset_names else None
    if node_ids is not None and set(node_ids) & set(cov_ids):
        raise ValueError("subset and covariates overlap")
    n_nodes = len(node_ids) if node_ids is not None else data.m - len(cov_ids)
    config = StabilityConfig(
        B=n_pairs,
        target_fdr=fdr,
        policy=policy,
        fit=_fit_config(param, degrees, ridge, cov_ids),
        max_in_degree=min(max_in_degree, n_nodes - 1),
        restarts=restarts,
        seed=seed,
    )
    result = stability_select(data, config, node_ids=node_ids, n_jobs=jobs)
    _write(f"{out}.json", _json_text(result.to_json_dict()))
    _write(f"{out}.dot", result.to_dot())
    thr = "undefined" if result.threshold is None else f"{result.threshold:.4g}"
    click.echo(
        f"stability: threshold {thr}, {len(result.edges)} edges "
        f"({result.n_runs}/{result.n_planned} runs); wrote {out}.json and {out}.dot"
    )


# -- experiment --------------------------------------------------------------------


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False), help="ExperimentSpec JSON file.")
@click.option("--out", required=True, help="Report CSV path.")
@click.option("--checkpoint-dir", default=None, help="Cell checkpoint directory (default: <out>.checkpoints).")
@click.option("--jobs", type=int, default=None, help="Parallel cells (default: HURDLEDAG_JOBS).")
@_guarded
def experiment(spec_path, out, checkpoint_dir, jobs):
    """Run a recovery-rate grid with per-replicate checkpointing and resume."""
    with open(spec_path) as fh:
        spec = ExperimentSpec.from_json_dict(json.load(fh))
    ckpt = checkpoint_dir if checkpoint_dir else f"{out}.checkpoints"
    rows = run_experiment(spec, ckpt, report_path=out, n_jobs=jobs)
    click.echo(f"wrote {out} ({len(rows)} rows; checkpoints in {ckpt})")


if __name__ == "__main__":
    main()
