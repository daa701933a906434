"""Command-line entry points: the HTTP server, the latency bench and a
phantom generator for quick demos."""

from __future__ import annotations

from pathlib import Path

import click

from .bench import report_table, time_backend
from .config import load_config, build_registry
from .nifti import NiftiHeader, read_nifti, write_nifti
from .phantom import make_phantom


@click.group()
def main():
    """Interactive point-prompted 3D segmentation engine."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config declaring backends, decoder defaults and caps.")
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Serve a built browser client (frontend/dist) at /.")
def serve(host: str, port: int, config_path: str | None, ui_dir: str | None):
    """Run the HTTP API server."""
    import uvicorn

    from .service import create_app

    app = create_app(load_config(config_path), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--backend", "backends", multiple=True,
              help="Backend name; repeat to compare several. Default: all configured.")
@click.option("--dims", default="128,128,128", show_default=True,
              help="Phantom dims as i,j,k.")
@click.option("--reps", default=10, show_default=True, type=int)
@click.option("--warmup", default=1, show_default=True, type=int)
@click.option("--prompts", default=1, show_default=True, type=int)
@click.option("--ensemble-runs", default=5, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--parallel-ensemble", is_flag=True, default=False,
              help="Run ensemble decodes on a thread pool.")
@click.option("--volume", "volume_path", type=click.Path(exists=True), default=None,
              help="Time a real NIfTI file instead of the phantom.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write machine records here (TSV); a latency chart PNG lands alongside.")
def bench(backends, dims, reps, warmup, prompts, ensemble_runs, seed,
          parallel_ensemble, volume_path, config_path, out_path):
    """Time encode/decode/interaction/ensemble per backend."""
    config = load_config(config_path)
    registry = build_registry(config)
    names = list(backends) or [d.name for d in registry.descriptors()]
    dims_tuple = tuple(int(v) for v in dims.split(","))
    if len(dims_tuple) != 3:
        raise click.BadParameter("--dims needs three comma-separated integers")

    volume = None
    if volume_path:
        volume = read_nifti(Path(volume_path).read_bytes())[0]

    reports = []
    for name in names:
        click.echo(f"timing {name} ...", err=True)
        reports.extend(
            time_backend(
                registry.get(name),
                dims=dims_tuple,
                prompt_count=prompts,
                repetitions=reps,
                warmup=warmup,
                ensemble_runs=ensemble_runs,
                seed=seed,
                volume=volume,
                parallel_ensemble=parallel_ensemble,
            )
        )

    table, records = report_table(reports)
    click.echo(table)
    if out_path:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(records)
        from .figures import save_latency_chart

        chart = save_latency_chart(reports, out.with_suffix(".png"))
        click.echo(f"records: {out}", err=True)
        click.echo(f"figure:  {chart}", err=True)


@main.command()
@click.option("--dims", default="64,64,64", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--spheres", default=1, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(), required=True)
def phantom(dims, seed, spheres, out_path):
    """Write a synthetic sphere phantom as .nii or .nii.gz."""
    dims_tuple = tuple(int(v) for v in dims.split(","))
    vol = make_phantom(dims=dims_tuple, seed=seed, spheres=spheres)
    raw = write_nifti(
        vol, NiftiHeader.for_volume(vol, descrip="phantom"),
        gzip_output=str(out_path).endswith(".gz"),
    )
    Path(out_path).write_bytes(raw)
    click.echo(f"wrote {out_path} ({len(raw)} bytes)")


if __name__ == "__main__":
    main()
