"""Command line entry points: serve, create-admin, version."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .domain import Role
from .errors import LabelForgeError
from .service import LabelService, ServiceConfig
from .store import Store

CONTEXT_SETTINGS = {"auto_envvar_prefix": "LABELFORGE"}


def _build_config(port: int, data_dir: str, static_dir: str | None) -> ServiceConfig:
    config = ServiceConfig(
        port=port,
        data_dir=Path(data_dir),
        static_dir=Path(static_dir) if static_dir else None,
    )
    errors = config.validation_errors()
    if errors:
        for error in errors:
            click.echo(f"config error: {error}", err=True)
        sys.exit(2)
    return config


def _open_store(data_dir: Path) -> Store:
    data_dir.mkdir(parents=True, exist_ok=True)
    return Store(data_dir / "labelforge.db")


@click.group(context_settings=CONTEXT_SETTINGS)
def main() -> None:
    """Self-hostable data labeling with active learning and IRR."""


@main.command()
@click.option("--port", type=int, default=8000, show_default=True, envvar="LABELFORGE_PORT")
@click.option("--data-dir", type=str, default="./data", show_default=True, envvar="LABELFORGE_DATA_DIR")
@click.option(
    "--static-dir",
    type=str,
    default=None,
    envvar="LABELFORGE_STATIC_DIR",
    help="Directory of web UI assets served at /",
)
def serve(port: int, data_dir: str, static_dir: str | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    config = _build_config(port, data_dir, static_dir)
    store = _open_store(config.data_dir)
    service = LabelService(store=store, config=config)
    app = create_app(service)
    try:
        uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="info")
    finally:
        service.close()


@main.command("create-admin")
@click.option("--username", required=True)
@click.option("--data-dir", type=str, default="./data", show_default=True, envvar="LABELFORGE_DATA_DIR")
def create_admin(username: str, data_dir: str) -> None:
    """Create an admin account and print its session token."""
    config = _build_config(8000, data_dir, None)
    store = _open_store(config.data_dir)
    service = LabelService(store=store, config=config)
    try:
        coder = service.find_coder(username)
        if coder is None:
            coder = service.create_coder(username, Role.ADMIN)
        elif coder.role is not Role.ADMIN:
            click.echo(f"user {username} exists with role {coder.role.value}", err=True)
            sys.exit(1)
        token = service.create_session(coder.id)
    except LabelForgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    finally:
        service.close()
    click.echo(f"admin: {username}")
    click.echo(f"token: {token}")


@main.command()
def version() -> None:
    click.echo(__version__)


if __name__ == "__main__":
    main()
