"""Operator command line: offline builds, threshold evaluation, and serving."""

from __future__ import annotations

import csv
import json
import os
import shutil
import socket
import sys
import tempfile

import click

from .errors import BookForgeError
from .forge import ForgeConfig
from .gate import GateConfig, evaluate_thresholds, read_pairs_csv
from .narrative import NarrativeConfig
from .providers import ProviderSet, ProviderSettings, build_providers
from .service import PipelineService, create_app

EXIT_RUNTIME_FAILURE = 1


def _load_settings(providers_file: str | None) -> ProviderSettings:
    if providers_file is None:
        return ProviderSettings(sections={})  # all-mock provider set
    return ProviderSettings.from_file(providers_file)


def _configs_from(settings: ProviderSettings) -> tuple[GateConfig, NarrativeConfig, ForgeConfig]:
    gate_section = settings.section("gate")
    threshold = float(os.environ.get("BOOKFORGE_GATE_THRESHOLD",
                                     gate_section.get("threshold", 0.7)))
    gate = GateConfig(threshold=threshold)
    pipeline = settings.section("pipeline")
    narrative = NarrativeConfig(
        retries=int(pipeline.get("retries", 3)),
        backoff_seconds=float(pipeline.get("backoff_seconds", 0.5)),
        parallelism=int(pipeline.get("parallelism", 4)),
    )
    forge = ForgeConfig(
        parallelism=int(pipeline.get("parallelism", 4)),
        timeout_seconds=float(pipeline.get("generation_timeout_seconds", 300.0)),
    )
    return gate, narrative, forge


def _fail(payload: dict) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False), err=True)
    sys.exit(EXIT_RUNTIME_FAILURE)


@click.group()
@click.version_option(package_name="bookforge")
def main() -> None:
    """Turn story text into a downloadable 3D-book bundle."""


@main.command("build")
@click.option("--title", required=True, help="Book title.")
@click.option("--input", "input_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="UTF-8 story text file.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory receiving the bundle (manifest, assets, audio, zip).")
@click.option("--providers", "providers_file", type=click.Path(exists=True, dir_okay=False),
              help="TOML provider config; mock providers when omitted.")
@click.option("--language", default="und", show_default=True)
@click.option("--review-policy", type=click.Choice(["keep-all", "remove-all", "interactive"]),
              default="remove-all", show_default=True,
              help="How to resolve suspicious models without a reviewer UI.")
@click.option("--work-dir", type=click.Path(file_okay=False),
              help="Pipeline state directory; a temp dir when omitted.")
def cmd_build(title: str, input_file: str, out_dir: str, providers_file: str | None,
              language: str, review_policy: str, work_dir: str | None) -> None:
    """Run the full pipeline non-interactively and write the bundle to --out."""
    settings = _load_settings(providers_file)
    gate, narrative, forge = _configs_from(settings)
    providers = build_providers(settings)
    data_dir = work_dir or tempfile.mkdtemp(prefix="bookforge-build-")
    service = PipelineService(data_dir, providers, gate_config=gate,
                              narrative_config=narrative, forge_config=forge, run_async=False)
    try:
        body = open(input_file, encoding="utf-8").read()
        run = service.create_book(title, body, language)
        if run.state == "awaiting_review":
            _resolve_review(service, run.book_id, review_policy)
            run = service._run(run.book_id)
        if run.state != "ready":
            _fail({"error": "PipelineFailed", "state": run.state, "detail": run.error})
        bundle_dir = service.data.bundle_dir(run.book_id)
        out = os.path.abspath(out_dir)
        os.makedirs(out, exist_ok=True)
        shutil.copytree(bundle_dir, out, dirs_exist_ok=True)
        shutil.copy2(service.data.bundle_zip(run.book_id), os.path.join(out, "bundle.zip"))
        status = service.get_status(run.book_id)
        click.echo(json.dumps({
            "book_id": run.book_id,
            "state": run.state,
            "model_count": status["model_count"],
            "bundle_sha256": status["bundle_sha256"],
            "out": out,
        }, ensure_ascii=False))
    except BookForgeError as exc:
        _fail({"error": type(exc).__name__, "detail": str(exc)})
    finally:
        service.shutdown()


def _resolve_review(service: PipelineService, book_id: str, policy: str) -> None:
    items = service.get_review_items(book_id)
    for item in items:
        if item["verdict"] != "suspicious":
            continue
        if policy == "keep-all":
            service.post_verdict(book_id, item["asset_id"], "keep")
        elif policy == "interactive":
            answer = click.prompt(
                f"Suspicious model {item['keyword']!r} (score {item['score']:.2f}); "
                "type 'keep' to keep it",
                default="remove", show_default=True)
            if answer.strip().lower() == "keep":
                service.post_verdict(book_id, item["asset_id"], "keep")
        # remove-all: leave undecided; completion defaults them to removed
    service.post_review_complete(book_id)


def _format_percent(proportion: float | None) -> str:
    if proportion is None:
        return "n/a"
    return f"{proportion * 100:g}%"


@main.command("eval-thresholds")
@click.option("--pairs", "pairs_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of keyword,score,label rows (label: plausible|implausible).")
@click.option("--thresholds", default="0.9,0.8,0.7,0.6", show_default=True,
              help="Comma-separated cutoffs, evaluated in the given order.")
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table",
              show_default=True)
def cmd_eval_thresholds(pairs_file: str, thresholds: str, fmt: str) -> None:
    """Report the share of human-plausible models above each score cutoff."""
    try:
        pairs = read_pairs_csv(pairs_file)
    except ValueError as exc:
        raise click.UsageError(f"bad pairs file: {exc}") from exc
    if not pairs:
        raise click.UsageError("pairs file contains no rows")
    try:
        cutoffs = [float(part) for part in thresholds.split(",") if part.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad thresholds: {exc}") from exc
    if not cutoffs:
        raise click.UsageError("no thresholds given")
    rows = evaluate_thresholds(pairs, cutoffs)
    if fmt == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(["threshold", "proportion_percent", "count"])
        for row in rows:
            percent = "" if row.proportion is None else f"{row.proportion * 100:g}"
            writer.writerow([f"{row.threshold:g}", percent, row.count])
        return
    click.echo(f"{'threshold':>9}  {'proportion':>10}  {'count':>5}")
    for row in rows:
        click.echo(f"{row.threshold:>9g}  {_format_percent(row.proportion):>10}  {row.count:>5}")


@main.command("serve")
@click.option("--addr", default="127.0.0.1:8000", show_default=True, help="host:port to bind.")
@click.option("--data-dir", required=False, type=click.Path(file_okay=False),
              help="Pipeline state directory (or $BOOKFORGE_DATA_DIR).")
@click.option("--providers", "providers_file", type=click.Path(exists=True, dir_okay=False),
              help="TOML provider config; mock providers when omitted.")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False),
              help="Serve the review console from this directory at /ui.")
def cmd_serve(addr: str, data_dir: str | None, providers_file: str | None,
              ui_dir: str | None) -> None:
    """Run the pipeline HTTP service."""
    import uvicorn

    data_dir = data_dir or os.environ.get("BOOKFORGE_DATA_DIR")
    if not data_dir:
        raise click.UsageError("--data-dir or BOOKFORGE_DATA_DIR is required")
    host, _, port_text = addr.partition(":")
    try:
        port = int(port_text or "8000")
    except ValueError as exc:
        raise click.UsageError(f"bad --addr {addr!r}") from exc
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host or "127.0.0.1", port))
    except OSError as exc:
        click.echo(f"cannot bind {addr}: {exc}", err=True)
        sys.exit(EXIT_RUNTIME_FAILURE)
    finally:
        probe.close()

    settings = _load_settings(providers_file)
    gate, narrative, forge = _configs_from(settings)
    providers = build_providers(settings)
    service = PipelineService(data_dir, providers, gate_config=gate,
                              narrative_config=narrative, forge_config=forge, run_async=True)
    service.resume_incomplete()
    app = create_app(service, ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="warning")
    finally:
        service.shutdown()


if __name__ == "__main__":
    main()
