"""Command-line front end.

Every command builds the same request models the HTTP service accepts. By
default they are handled in-process; with ``--server URL`` the CLI posts them
to a running ``fnmr-audit serve`` instance instead. Exit codes report tool
failures only: a rejected null hypothesis is a finding, not an error.

Any option can also be set through environment variables prefixed with
``FNMR_AUDIT_`` (e.g. ``FNMR_AUDIT_ANALYZE_REPLICATES=499``).
"""

from __future__ import annotations

import json
import logging
import secrets
import sys
from pathlib import Path

import click

from . import service
from .data import DataError, load_study, to_json_records
from .estimators import EstimationError
from .ftest import DEFAULT_ALPHA, DEFAULT_REPLICATES, UndefinedStatisticError
from .manifest import RunManifest, file_digest
from .moe import MoeResult, format_bound, write_figure_series, write_flag_table
from .schemas import AnalyzeRequest, FTestResponse, MoeRequest, MoeResponse, SimCellRequest
from .simulation import (
    GRID_PARAMS,
    PROFILES,
    SimCellResult,
    SimConfig,
    run_cell,
    run_grid,
)
from .simulation import write_figure_series as write_sim_series

log = logging.getLogger("fnmr_audit")


class RemoteError(click.ClickException):
    pass


def _post(server: str, route: str, model):
    import httpx

    resp = httpx.post(server.rstrip("/") + route, json=model.model_dump(mode="json"), timeout=None)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        raise RemoteError(f"server returned {resp.status_code}: {detail}")
    return resp.json()


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _resolve_seed(seed):
    return secrets.randbits(63) if seed is None else seed


def _parse_list(text, cast):
    if text is None:
        return None
    try:
        return [cast(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def analyze_summary(res: dict) -> str:
    lines = ["group_id      n_subj     N_pi    pi_hat   rho_hat      m0"]
    for g in res["groups"]:
        lines.append(
            f"{g['group_id']:<12} {g['n_subjects']:>7} {g['n_pi']:>8} "
            f"{g['pi_hat']:>9.5f} {g['rho_hat']:>9.5f} {g['m0']:>7.3f}"
        )
    lines.append("")
    lines.append(f"pooled FNMR = {res['pooled_pi_hat']:.6g}")
    lines.append(
        f"F = {res['f_observed']:.6g}, p = {res['p_value']:.6g} "
        f"(K = {res['K']} bootstrap replicates, seed = {res['seed']})"
    )
    if res["degenerate_replicates"]:
        lines.append(f"{res['degenerate_replicates']} replicate(s) had an undefined statistic "
                     "and were counted as at least as extreme")
    if res["reject_at_alpha"]:
        lines.append(f"At alpha = {res['alpha']:g} the FNMRs differ across groups "
                     "(reject equal-FNMR hypothesis).")
    else:
        lines.append(f"At alpha = {res['alpha']:g} there is no detectable difference in FNMR "
                     "across groups (equal-FNMR hypothesis retained).")
    return "\n".join(lines) + "\n"


def moe_summary(res: dict) -> str:
    lower, upper = res["interval"]
    lines = [
        f"pooled FNMR = {res['pooled_pi_hat']:.6g}",
        f"margin of error M = {res['margin']:.6g} "
        f"(K = {res['K']}, alpha = {res['alpha']:g}, seed = {res['seed']})",
        f"interval ({format_bound(lower)}, {format_bound(upper)})",
        "",
    ]
    for g in res["groups"]:
        mark = "FLAGGED" if g["flagged"] else "ok"
        lines.append(f"{g['group_id']:<12} {g['pi_hat']:>9.5f}  {mark}")
    flagged = [g["group_id"] for g in res["groups"] if g["flagged"]]
    lines.append("")
    if flagged:
        lines.append(f"{len(flagged)} group(s) outside the interval: {', '.join(flagged)}")
    else:
        lines.append("no group falls outside the interval")
    return "\n".join(lines) + "\n"


def _load_request_study(input_path):
    try:
        study = load_study(input_path)
    except FileNotFoundError as exc:
        raise click.ClickException(f"cannot read input: {exc}") from None
    except DataError as exc:
        raise click.ClickException(f"invalid input {input_path}: {exc}") from None
    return to_json_records(study)


def do_analyze(config: dict, out: Path, server: str | None) -> dict:
    records = _load_request_study(config["input"])
    req = AnalyzeRequest(records=records, replicates=config["replicates"], alpha=config["alpha"],
                         seed=config["seed"], threads=config["threads"], include_reference=True)
    if server:
        res = FTestResponse(**_post(server, "/analyze", req)).model_dump()
    else:
        res = service.analyze(req).model_dump()
    _dump(res, out / "ftest.json")
    (out / "summary.txt").write_text(analyze_summary(res), encoding="utf-8")
    return res


def do_moe(config: dict, out: Path, server: str | None) -> dict:
    records = _load_request_study(config["input"])
    req = MoeRequest(records=records, replicates=config["replicates"], alpha=config["alpha"],
                     seed=config["seed"], threads=config["threads"], include_phi=True)
    if server:
        res = MoeResponse(**_post(server, "/moe", req)).model_dump()
    else:
        res = service.moe(req).model_dump()
    res["interval"] = list(res["interval"])
    _dump(res, out / "moe.json")
    result = MoeResult.from_dict(res)
    write_flag_table(result, out / "flags.csv")
    write_figure_series(result, out / "moe_series.csv")
    (out / "summary.txt").write_text(moe_summary(res), encoding="utf-8")
    return res


def do_simulate(config: dict, out: Path, server: str | None) -> list:
    fixed = {"R": config["R"], "K": config["replicates"], "alpha": config["alpha"],
             "seed": config["seed"]}

    def remote_cell(cfg: SimConfig, threads: int) -> SimCellResult:
        req = SimCellRequest(**{k: getattr(cfg, k) for k in SimCellRequest.model_fields
                                if k != "threads"}, threads=threads)
        return SimCellResult.from_row(_post(server, "/simulate/cell", req))

    results = run_grid(config["grid"], fixed, out=out / "grid.csv", threads=config["threads"],
                       cell_runner=remote_cell if server else run_cell)
    write_sim_series(results, out / "series_pi.csv", series="pi")
    return results


COMMANDS = {"analyze": do_analyze, "moe": do_moe, "simulate": do_simulate}


def execute(command: str, config: dict, out_dir, server: str | None = None,
            threads: int | None = None):
    """Run one command from a fully resolved config and write its manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = dict(config)
    run_threads = threads if threads is not None else config.get("threads", 1)
    digests = {config["input"]: file_digest(config["input"])} if "input" in config else {}
    result = COMMANDS[command]({**config, "threads": run_threads}, out, server)
    config.pop("threads", None)
    RunManifest(command, config, config["seed"], digests).write(out)
    return result


def _run(ctx, command, config, out):
    try:
        return execute(command, config, out, ctx.obj.get("server"))
    except click.ClickException:
        raise
    except UndefinedStatisticError as exc:
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in exc.terms.items())
        raise click.ClickException(f"{exc} [per-group variance terms: {terms}]") from None
    except (DataError, EstimationError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from None


bootstrap_options = [
    click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
                 help="Decision file (CSV, or .json record mirror)."),
    click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory."),
    click.option("--replicates", "-K", default=DEFAULT_REPLICATES, show_default=True, type=int,
                 help="Bootstrap replicates K."),
    click.option("--alpha", default=DEFAULT_ALPHA, show_default=True, type=float),
    click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                 help="RNG seed; drawn from entropy and recorded when omitted."),
    click.option("--threads", default=1, show_default=True, type=click.IntRange(1)),
]


def with_options(options):
    def deco(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return deco


@click.group(context_settings={"auto_envvar_prefix": "FNMR_AUDIT"})
@click.option("--server", default=None, help="Send work to a running fnmr-audit service.")
@click.option("-v", "--verbose", is_flag=True)
@click.version_option(package_name="fnmr-audit")
@click.pass_context
def main(ctx, server, verbose):
    """Audit FNMR differences across demographic groups."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@with_options(bootstrap_options)
@click.pass_context
def analyze(ctx, input_path, out, replicates, alpha, seed, threads):
    """Bootstrap F-test of equal FNMR across all groups."""
    config = {"input": input_path, "replicates": replicates, "alpha": alpha,
              "seed": _resolve_seed(seed), "threads": threads}
    res = _run(ctx, "analyze", config, out)
    click.echo(analyze_summary(res), nl=False)


@main.command()
@with_options(bootstrap_options)
@click.pass_context
def moe(ctx, input_path, out, replicates, alpha, seed, threads):
    """Margin of error around the pooled FNMR; flag groups outside it."""
    config = {"input": input_path, "replicates": replicates, "alpha": alpha,
              "seed": _resolve_seed(seed), "threads": threads}
    res = _run(ctx, "moe", config, out)
    click.echo(moe_summary(res), nl=False)


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk", show_default=True)
@click.option("--pi", "pi_", default=None, help="Comma-separated FNMR values.")
@click.option("--rho", default=None, help="Comma-separated correlations.")
@click.option("--n", "n_", default=None, help="Comma-separated subjects per group.")
@click.option("--m", "m_", default=None, help="Comma-separated attempts per subject.")
@click.option("--G", "G_", default=None, help="Comma-separated group counts.")
@click.option("--R", "R_", type=click.IntRange(1), default=None, help="Runs per cell.")
@click.option("--replicates", "-K", type=click.IntRange(1), default=None)
@click.option("--alpha", default=DEFAULT_ALPHA, show_default=True, type=float)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None)
@click.option("--threads", default=1, show_default=True, type=click.IntRange(1))
@click.pass_context
def simulate(ctx, out, profile, pi_, rho, n_, m_, G_, R_, replicates, alpha, seed, threads):
    """Monte Carlo grid of the margin of error (resumable)."""
    prof = PROFILES[profile]
    grid = {k: list(v) for k, v in prof["grid"].items()}
    for name, text, cast in (("pi", pi_, float), ("rho", rho, float), ("n", n_, int),
                             ("m", m_, int), ("G", G_, int)):
        vals = _parse_list(text, cast)
        if vals is not None:
            grid[name] = vals
    config = {"profile": profile, "grid": {k: grid[k] for k in GRID_PARAMS},
              "R": R_ or prof["R"], "replicates": replicates or prof["K"], "alpha": alpha,
              "seed": _resolve_seed(seed), "threads": threads}
    results = _run(ctx, "simulate", config, out)
    click.echo(f"{len(results)} cell(s) written to {Path(out) / 'grid.csv'}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--threads", default=1, show_default=True, type=click.IntRange(1))
@click.pass_context
def replay(ctx, manifest, out, threads):
    """Re-run a command from its manifest.json."""
    man = RunManifest.read(manifest)
    try:
        man.check_inputs()
        execute(man.command, man.config, out, ctx.obj.get("server"), threads=threads)
    except (DataError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"replayed {man.command} into {out}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("fnmr_audit.service:app", host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
