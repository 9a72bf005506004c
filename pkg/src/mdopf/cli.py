"""Thin command-line client of the solver service.

By default each command spins up the FastAPI app in-process and talks to it
over an ASGI transport; pass ``--server URL`` to target a running instance
instead. Exit codes: 0 success, 2 solver failure, 3 parse/validation failure.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .experiments import (
    CompareRecord,
    ExponentRecord,
    MODEL_CHOICES,
    VrefRecord,
    VufSampleRecord,
    VufSummaryRecord,
    write_compare_csv,
    write_exponent_csv,
    write_vref_csv,
    write_vuf_csv,
)
from .feeder import write_solution_table_csv

EXIT_SOLVER = 2
EXIT_INPUT = 3


def _load_feeder_doc(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read feeder {path}: {exc}", err=True)
        sys.exit(EXIT_INPUT)


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        try:
            with httpx.Client(base_url=server, timeout=None) as client:
                response = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach {server}: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
    else:
        from .service.app import create_app

        async def in_process():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://mdopf.internal",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(in_process())

    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = response.text
    click.echo(f"error ({response.status_code}): {detail}", err=True)
    sys.exit(EXIT_INPUT if response.status_code in (400, 422) else EXIT_SOLVER)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running mdopf service (default: in-process).")
@click.pass_context
def main(ctx, server):
    """Multiphase distribution OPF toolkit."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--feeder", "feeder_path", required=True, type=click.Path())
@click.option("--model", required=True, type=click.Choice(MODEL_CHOICES))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--tol", default=1e-10, show_default=True)
@click.option("--max-iter", default=200, show_default=True)
@click.pass_context
def solve(ctx, feeder_path, model, out_path, tol, max_iter):
    """Solve one model on a feeder and write the solution CSV."""
    doc = _load_feeder_doc(feeder_path)
    payload = {"feeder": doc, "model": model, "tol": tol, "max_iter": max_iter}
    result = _post(ctx.obj["server"], "/solve", payload)
    write_solution_table_csv({"buses": result["buses"], "loads": result["loads"]},
                             out_path)
    click.echo(f"{model} objective {result['objective']:.9f} -> {out_path}")


@main.command()
@click.option("--feeder", "feeder_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--models", default=",".join(MODEL_CHOICES), show_default=True,
              help="Comma-separated model list.")
@click.pass_context
def compare(ctx, feeder_path, out_path, models):
    """Solve several models and write deviation metrics vs AC-D-E."""
    doc = _load_feeder_doc(feeder_path)
    payload = {
        "feeder": doc,
        "name": Path(feeder_path).stem,
        "models": [m.strip() for m in models.split(",") if m.strip()],
    }
    result = _post(ctx.obj["server"], "/compare", payload)
    write_compare_csv([CompareRecord(**r) for r in result["records"]], out_path)
    click.echo(f"compare -> {out_path}")


@main.group()
def sweep():
    """Parameter sweeps reproducing the error studies."""


def _float_range(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise click.BadParameter("--step must be positive")
    count = int(abs(stop - start) / step + 1e-9) + 1
    sign = 1.0 if stop >= start else -1.0
    return [start + sign * k * step for k in range(count)]


@sweep.command()
@click.option("--feeder", "feeder_path", required=True, type=click.Path())
@click.option("--from", "start", default=0.0, show_default=True)
@click.option("--to", "stop", default=3.0, show_default=True)
@click.option("--step", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Unused; kept for a uniform interface.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def exponent(ctx, feeder_path, start, stop, step, seed, out_path):
    """Sweep a uniform load exponent and record both objectives."""
    doc = _load_feeder_doc(feeder_path)
    payload = {"feeder": doc, "alphas": _float_range(start, stop, step)}
    result = _post(ctx.obj["server"], "/sweep/exponent", payload)
    write_exponent_csv([ExponentRecord(**r) for r in result["records"]], out_path)
    click.echo(f"exponent sweep -> {out_path}")


@sweep.command()
@click.option("--feeder", "feeder_path", required=True, type=click.Path())
@click.option("--targets", default="1,2,3,4,5,6,7,8,9,10", show_default=True,
              help="Comma-separated VUF targets in percent.")
@click.option("--samples", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def vuf(ctx, feeder_path, targets, samples, seed, out_path):
    """Sweep reference-voltage unbalance and record voltage errors."""
    doc = _load_feeder_doc(feeder_path)
    payload = {
        "feeder": doc,
        "targets": [float(t) for t in targets.split(",") if t.strip()],
        "samples": samples,
        "seed": seed,
    }
    result = _post(ctx.obj["server"], "/sweep/vuf", payload)
    write_vuf_csv([VufSampleRecord(**r) for r in result["records"]],
                  [VufSummaryRecord(**r) for r in result["summaries"]], out_path)
    click.echo(f"vuf sweep -> {out_path}")


@sweep.command()
@click.option("--feeder", "feeder_path", required=True, type=click.Path())
@click.option("--from", "start", default=1.0, show_default=True)
@click.option("--to", "stop", default=0.9, show_default=True)
@click.option("--step", default=0.025, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Unused; kept for a uniform interface.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def vref(ctx, feeder_path, start, stop, step, seed, out_path):
    """Sweep the reference-voltage magnitude scaling factor."""
    doc = _load_feeder_doc(feeder_path)
    payload = {"feeder": doc, "factors": _float_range(start, stop, step)}
    result = _post(ctx.obj["server"], "/sweep/vref", payload)
    write_vref_csv([VrefRecord(**r) for r in result["records"]], out_path)
    click.echo(f"vref sweep -> {out_path}")


if __name__ == "__main__":
    main()
