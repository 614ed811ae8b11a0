"""Command line entry point."""

from __future__ import annotations

import logging
import os
from pathlib import Path

import click
import uvicorn

from .api_service import build_service, create_app


@click.group()
def main() -> None:
    """Grounded physiotherapy advisor service."""


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--backend", default="mock", show_default=True, type=click.Choice(["remote", "mock"]))
@click.option("--mock-script", default=None, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Mock completion script; defaults to <data-dir>/mock_script.jsonl.")
@click.option("--llm-url", default=None, help="Chat-completion endpoint URL (remote backend).")
@click.option("--llm-model", default=None, help="Model name sent to the remote endpoint.")
@click.option("--seed", default=None, type=int, help="RNG seed for exercise sampling.")
def serve(
    data_dir: Path,
    port: int,
    backend: str,
    mock_script: Path | None,
    llm_url: str | None,
    llm_model: str | None,
    seed: int | None,
) -> None:
    """Load the knowledge base from DATA-DIR and serve the API and chat UI."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    state = build_service(
        data_dir,
        backend_kind=backend,
        mock_script=mock_script,
        llm_url=llm_url,
        llm_model=llm_model,
        seed=seed,
    )
    ui_dir = _resolve_ui_dir()
    app = create_app(state, ui_dir=ui_dir)
    click.echo(f"knowledge base loaded: {state.kb.counts()}")
    if ui_dir is not None:
        click.echo(f"serving chat UI from {ui_dir}")
    uvicorn.run(app, host="0.0.0.0", port=port, log_level="info")


def _resolve_ui_dir() -> Path | None:
    override = os.environ.get("PHYSIO_UI_DIR")
    if override:
        return Path(override)
    default = Path("frontend") / "dist"
    return default if default.is_dir() else None


if __name__ == "__main__":
    main()
