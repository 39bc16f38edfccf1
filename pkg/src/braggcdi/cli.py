"""Command-line client for the reconstruction service.

Each verb builds a request from the YAML config (plus flag overrides) and
posts it to the HTTP service. By default the service runs in-process, so
no server needs to be started; ``--server`` targets a remote instance and
``serve`` starts one.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .config import ConfigError, ExperimentConfig, load_config


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process: drive the ASGI app directly through starlette's sync client
    from starlette.testclient import TestClient

    from .service import app  # imported lazily: pulls in the full pipeline

    return TestClient(app)


def _build_config(config_path, no_noise, max_iters) -> ExperimentConfig:
    try:
        cfg = load_config(config_path) if config_path else ExperimentConfig()
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    if no_noise:
        cfg = cfg.model_copy(
            update={
                "noise": cfg.noise.model_copy(update={"enabled": False}),
                "variants": [v for v in cfg.variants if not v.noise]
                or cfg.variants,
            }
        )
    if max_iters is not None:
        cfg = cfg.model_copy(
            update={
                "shrinkwrap": cfg.shrinkwrap.model_copy(
                    update={"max_iterations": max_iters}
                )
            }
        )
    return cfg


def _post(server: str | None, path: str, payload: dict) -> dict:
    with _client(server) as client:
        response = client.post(path, json=payload)
    if response.status_code != 200:
        raise click.ClickException(
            f"service returned {response.status_code}: {response.text}"
        )
    return response.json()


def _emit(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="YAML experiment config."),
    click.option("--out", "out_dir", default=None, help="Output directory."),
    click.option("--server", default=None,
                 help="Base URL of a running service; default runs in-process."),
    click.option("--no-noise", is_flag=True, help="Drop noisy variants."),
    click.option("--dump-volumes", is_flag=True, help="Write raw volume dumps."),
    click.option("--max-iters", type=int, default=None,
                 help="Override the shrink-wrap iteration cap."),
]


def with_common_options(fn):
    for option in reversed(common_options):
        fn = option(fn)
    return fn


def _payload(config_path, out_dir, no_noise, dump_volumes, max_iters, **extra) -> dict:
    cfg = _build_config(config_path, no_noise, max_iters)
    if dump_volumes:
        cfg = cfg.model_copy(
            update={"outputs": cfg.outputs.model_copy(update={"dump_volumes": True})}
        )
    payload = {"config": cfg.model_dump(mode="json", exclude={"forward": {"form_factor"}})}
    if out_dir:
        payload["out_dir"] = out_dir
    payload.update(extra)
    return payload


@click.group()
def main() -> None:
    """Bragg-CDI simulation and reconstruction toolkit."""


@main.command()
@with_common_options
def simulate(config_path, out_dir, server, no_noise, dump_volumes, max_iters):
    """Simulate the far-field intensity (plus optional photon noise)."""
    _emit(_post(server, "/simulate",
                _payload(config_path, out_dir, no_noise, dump_volumes, max_iters)))


@main.command()
@with_common_options
def reconstruct(config_path, out_dir, server, no_noise, dump_volumes, max_iters):
    """One-step deterministic reconstruction per configured noise case."""
    _emit(_post(server, "/reconstruct",
                _payload(config_path, out_dir, no_noise, dump_volumes, max_iters)))


@main.command()
@with_common_options
@click.option("--seed-kind", type=click.Choice(["dcdi", "autocorr"]),
              default="dcdi", show_default=True)
@click.option("--noisy", is_flag=True, help="Refine against the noisy intensity.")
def refine(config_path, out_dir, server, no_noise, dump_volumes, max_iters,
           seed_kind, noisy):
    """Shrink-wrap refinement from the chosen seed."""
    _emit(_post(server, "/refine",
                _payload(config_path, out_dir, no_noise, dump_volumes, max_iters,
                         seed_kind=seed_kind, noise=noisy)))


@main.command()
@with_common_options
def compare(config_path, out_dir, server, no_noise, dump_volumes, max_iters):
    """Run both seed branches per noise case and print the verdicts."""
    data = _post(server, "/compare",
                 _payload(config_path, out_dir, no_noise, dump_volumes, max_iters))
    for case in data["cases"]:
        click.echo(case["verdict"])
    _emit(data)


@main.command()
@with_common_options
def run(config_path, out_dir, server, no_noise, dump_volumes, max_iters):
    """Run the full experiment matrix and write summary/trace CSVs."""
    data = _post(server, "/run",
                 _payload(config_path, out_dir, no_noise, dump_volumes, max_iters))
    _emit(data)
    if data["failed"]:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("braggcdi.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
