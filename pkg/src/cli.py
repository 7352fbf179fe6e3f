"""
Command-line front end for the packing toolkit.

    python -m src.cli gen gap2k out.json --k 3
    python -m src.cli solve-lp out.json --relaxation strengthened
    python -m src.cli round out.json --algo strong --trials 10000 --seed 7
    python -m src.cli verify --full

Tables go to stdout, logs to stderr. `--json` switches every command to a
single JSON document carrying "schema_version". Errors map to exit codes:
2 bad input, 3 solver failure, 4 precondition violation; `verify` exits
with 1 when a suite fails.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd

from src.config import Settings
from src.exceptions import InstanceError, PackingError
from src.logger import get_logger
from src.packing.exact import solve_exact
from src.packing.generators import (
    SIZE_PROFILES,
    WEIGHT_PROFILES,
    gen_gap_2k_minus_1,
    gen_gap_general_b,
    gen_l1_bad_example,
    gen_random,
    gen_strawman_counterexample,
)
from src.packing.instance import normalize_unit_capacities
from src.packing.instance_io import load_instance, save_instance
from src.packing.lp import build_relaxation, solve_lp, to_lp_format
from src.packing.rounding import AlterationRule
from src.packing.streams import time_seed
from src.packing.submodular import load_oracle
from src.services.experiment_service import GAP_FAMILIES, ExperimentService
from src.store.results import ResultStore

logger = get_logger(__name__)

SCHEMA_VERSION = 1


class PackingGroup(click.Group):
    """Command group that turns toolkit errors into their exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except PackingError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            ctx.exit(e.exit_code)


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, nan and inf mapped to null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    if Settings().ci_deterministic:
        raise click.UsageError("--seed is required when CI_DETERMINISTIC=1")
    return time_seed()


def _emit(
    ctx: click.Context,
    command: str,
    payload: Dict[str, Any],
    frame: Optional[pd.DataFrame] = None,
    key: Optional[str] = None,
) -> None:
    """Print the result, and record it when --db is set."""
    obj = ctx.obj
    if obj["json"]:
        document = {"schema_version": SCHEMA_VERSION, "command": command, **payload}
        if frame is not None:
            document["rows"] = frame.to_dict(orient="records")
        click.echo(json.dumps(_clean(document), sort_keys=True))
    else:
        header = " ".join(f"{k}={v}" for k, v in payload.items() if not isinstance(v, (list, dict)))
        click.echo(f"# {command} {header}")
        if frame is not None:
            click.echo(frame.to_string(index=False))

    if obj["db"] and frame is not None and key is not None:
        with ResultStore(obj["db"]) as store:
            run_id = store.record_run(command, _clean(payload), payload.get("seed"))
            store.record_rows(run_id, _clean(frame.to_dict(orient="records")), key=key)


@click.group(cls=PackingGroup)
@click.option("--json", "as_json", is_flag=True, help="Print one JSON document instead of tables.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads for Monte Carlo trials.")
@click.option("--db", type=click.Path(dir_okay=False), default=None, help="Record campaign tables in this DuckDB file.")
@click.pass_context
def cli(ctx: click.Context, as_json: bool, threads: Optional[int], db: Optional[str]) -> None:
    """Column-sparse packing: LP relaxations, randomized rounding and experiments."""
    ctx.ensure_object(dict)
    ctx.obj.update({"json": as_json, "threads": threads, "db": db})


@cli.command()
@click.argument("family", type=click.Choice(GAP_FAMILIES + ("random",)))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--m", type=int, default=10, show_default=True)
@click.option("--B", "slack_b", type=float, default=2.0, show_default=True)
@click.option("--M", "big_m", type=int, default=100, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--size-profile", type=click.Choice(SIZE_PROFILES), default="uniform", show_default=True)
@click.option("--weight-profile", type=click.Choice(WEIGHT_PROFILES), default="unit", show_default=True)
@click.option("--density", type=float, default=1.0, show_default=True)
@click.option("--capacity", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--x-out", type=click.Path(dir_okay=False), default=None, help="strawman: write x = 1/2 here.")
@click.pass_context
def gen(ctx, family, output, k, n, m, slack_b, big_m, epsilon, size_profile, weight_profile, density, capacity,
        seed, x_out):
    """Generate an instance of FAMILY and write it to OUTPUT."""
    payload: Dict[str, Any] = {"family": family, "output": output}
    if family == "gap2k":
        inst = gen_gap_2k_minus_1(k, epsilon)
    elif family == "l1bad":
        inst = gen_l1_bad_example(n)
    elif family == "gapB":
        inst = gen_gap_general_b(n, slack_b)
    elif family == "strawman":
        inst, x = gen_strawman_counterexample(big_m)
        if x_out:
            Path(x_out).write_text(json.dumps(list(x.x)), encoding="utf-8")
            payload["x_out"] = x_out
    else:
        seed = _resolve_seed(seed)
        inst = gen_random(n, m, k, size_profile, density, weight_profile, seed, capacity)
        payload["seed"] = seed
    save_instance(inst, output)
    payload.update({"n": inst.n, "m": inst.m})
    _emit(ctx, "gen", payload)


@cli.command("solve-lp")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--relaxation", type=click.Choice(["natural", "strengthened"]), default="natural", show_default=True)
@click.option("--lp-out", type=click.Path(dir_okay=False), default=None, help="Also write the model in LP format.")
@click.pass_context
def solve_lp_command(ctx, instance, relaxation, lp_out):
    """Solve an LP relaxation and print the objective and x as JSON."""
    inst = load_instance(instance)
    model = build_relaxation(normalize_unit_capacities(inst), relaxation)
    if lp_out:
        Path(lp_out).write_text(to_lp_format(model), encoding="utf-8")
    sol = solve_lp(model)
    document = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve-lp",
        "relaxation": relaxation,
        "objective": sol.objective,
        "x": list(sol.x),
        "iterations": sol.iterations,
    }
    click.echo(json.dumps(_clean(document), sort_keys=True))


@cli.command("solve-exact")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--method", type=click.Choice(["auto", "exhaustive", "branch-and-bound"]), default="auto", show_default=True
)
@click.pass_context
def solve_exact_command(ctx, instance, method):
    """Find a provably optimal integral solution of a small instance."""
    result = solve_exact(load_instance(instance), method)
    _emit(
        ctx,
        "solve-exact",
        {
            "method": result.method,
            "value": result.value,
            "nodes": result.nodes,
            "solution": list(result.solution.counts),
        },
    )


def _load_point(path: Optional[str]) -> Optional[List[float]]:
    if path is None:
        return None
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceError(f"cannot read point file {path}: {e}") from e
    if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
        raise InstanceError(f"point file {path} must hold a JSON list of numbers")
    return [float(v) for v in data]


@cli.command("round")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--algo", type=click.Choice(["simple", "strong", "large-b", "strawman"]), default="strong",
              show_default=True)
@click.option("--alpha", type=float, default=None, help="Defaults: simple 4, strong 1; rejected for large-b, which derives its own.")
@click.option("--trials", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--x", "x_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list with the point to round (default: LP optimum).")
@click.option("--min-samples", type=click.IntRange(min=1), default=1, show_default=True,
              help="Conditional samples an item needs before its retention is tested.")
@click.pass_context
def round_command(ctx, instance, algo, alpha, trials, seed, x_path, min_samples):
    """Monte Carlo summary of a rounding algorithm: value, retention, feasibility."""
    seed = _resolve_seed(seed)
    service = ExperimentService(ctx.obj["threads"])
    summary, frame = service.round_summary(
        load_instance(instance), algo, alpha, trials, seed, _load_point(x_path), min_samples
    )
    _emit(ctx, "round", summary.model_dump(mode="json"), frame, key="item")


@cli.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.argument("oracle", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=None)
@click.option("--samples", type=click.IntRange(min=1), default=None)
@click.option("--trials", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--rule", type=click.Choice(["sorted", "powers_of_two"]), default="sorted", show_default=True)
@click.pass_context
def submod(ctx, instance, oracle, alpha, steps, samples, trials, seed, rule):
    """Continuous greedy plus sample-and-alter for a submodular objective."""
    seed = _resolve_seed(seed)
    service = ExperimentService(ctx.obj["threads"])
    summary, frame = service.submod_summary(
        load_instance(instance), load_oracle(oracle), alpha, steps, samples, trials, seed, AlterationRule(rule)
    )
    _emit(ctx, "submod", summary.model_dump(mode="json"), frame, key="metric")


@cli.command()
@click.argument("family", type=click.Choice(GAP_FAMILIES))
@click.option("--k", "ks", type=int, multiple=True, help="gap2k: one row per value.")
@click.option("--n", "ns", type=int, multiple=True, help="l1bad, gapB: one row per value.")
@click.option("--B", "slack_b", type=float, default=2.0, show_default=True)
@click.option("--M", "big_ms", type=int, multiple=True, help="strawman: one row per value.")
@click.option("--epsilon", type=float, default=None)
@click.pass_context
def gap(ctx, family, ks, ns, slack_b, big_ms, epsilon):
    """Integrality-gap table: natural LP, strengthened LP, exact optimum."""
    if family == "gap2k":
        points = [{"k": k, "epsilon": epsilon} if epsilon is not None else {"k": k} for k in ks or (2, 3, 4)]
    elif family == "l1bad":
        points = [{"n": n} for n in ns or (10,)]
    elif family == "gapB":
        points = [{"n": n, "B": slack_b} for n in ns or (8,)]
    else:
        points = [{"M": big_m} for big_m in big_ms or (10,)]
    rows, frame = ExperimentService(ctx.obj["threads"]).gap_table(family, points)
    frame.insert(0, "row", range(len(frame)))
    _emit(ctx, "gap", {"family": family, "passed": all(r.passed for r in rows)}, frame, key="row")


@cli.command()
@click.option("--full", is_flag=True, help="Acceptance-scale trial counts.")
@click.option("--seed", type=int, default=None)
@click.pass_context
def verify(ctx, full, seed):
    """Run the invariant suites; exit 1 if any fails."""
    seed = _resolve_seed(seed)
    results, frame = ExperimentService(ctx.obj["threads"]).verify(full, seed)
    passed = all(r.passed for r in results)
    _emit(ctx, "verify", {"full": full, "seed": seed, "passed": passed}, frame, key="suite")
    if not passed:
        ctx.exit(1)


@cli.command()
@click.argument("output", type=click.Path(dir_okay=False))
@click.pass_context
def export(ctx, output):
    """Dump the result store (--db, or RESULTS_DB_PATH) to an Excel workbook."""
    db = ctx.obj["db"] or Settings().results_db_path
    if not Path(db).exists():
        raise InstanceError(f"result store {db} does not exist")
    with ResultStore(db) as store:
        path = store.export_excel(output)
        runs = len(store.fetch_runs())
    if ctx.obj["json"]:
        click.echo(json.dumps({"schema_version": SCHEMA_VERSION, "command": "export", "output": str(path),
                               "runs": runs}))
    else:
        click.echo(f"# export output={path} runs={runs}")


if __name__ == "__main__":
    cli()
