"""Command-line entry points: serve, simulate, export, seed-avatars.

Exit codes: 0 ok, 2 config invalid, 3 not found, 4 provider failure.
"""

from __future__ import annotations

import json
import logging
import os
import signal
import sys
from pathlib import Path

import click

from .auth import AuthService, hash_password
from .bundle import instantiate_bundle, read_bundle
from .clock import WallClock
from .errors import NotFoundError, ProviderError, ValidationFailure
from .export import write_bundle
from .gateway import create_app
from .models import AccountRole, Avatar, GenderTag, UserAccount
from .orchestrator import Orchestrator
from .simulate import run_simulation
from .store import Store

EXIT_CONFIG_INVALID = 2
EXIT_NOT_FOUND = 3
EXIT_PROVIDER_FAILURE = 4


@click.group()
def cli() -> None:
    """Controlled social-media simulation server."""
    logging.basicConfig(level=os.environ.get("PLAZA_LOG_LEVEL", "INFO"))


@cli.command()
@click.option("--config", type=click.Path(exists=True), default=None, help="Experiment bundle to preload.")
@click.option("--data-dir", default=lambda: os.environ.get("PLAZA_DATA_DIR", "./plaza-data"))
@click.option("--bind", default=lambda: os.environ.get("PLAZA_BIND", "127.0.0.1:8321"))
@click.option("--tick-ms", default=lambda: int(os.environ.get("PLAZA_TICK_MS", "100")), type=int)
@click.option("--seed", default=0, type=int, help="Master seed for instance randomization.")
@click.option(
    "--admin-email",
    default=lambda: os.environ.get("PLAZA_ADMIN_EMAIL", "admin@example.invalid"),
)
@click.option("--admin-password", default=lambda: os.environ.get("PLAZA_ADMIN_PASSWORD", "admin"))
def serve(config, data_dir, bind, tick_ms, seed, admin_email, admin_password) -> None:
    """Run the gateway server."""
    import uvicorn

    store = Store(data_dir)
    if store.user_by_email(admin_email) is None:
        admin = UserAccount(
            id=store.new_id("u"),
            email=admin_email,
            credential=hash_password(admin_password),
            display_name="Researcher",
            account_role=AccountRole.RESEARCHER,
        )
        store.users[admin.id] = admin
    if config:
        try:
            instantiate_bundle(store, read_bundle(config))
        except ValidationFailure as exc:
            click.echo(f"invalid bundle: {exc.violations[0]}", err=True)
            sys.exit(EXIT_CONFIG_INVALID)
    store.flush()
    clock = WallClock()
    orchestrator = Orchestrator(store, master_seed=seed)
    auth = AuthService(store)
    app = create_app(store, orchestrator, auth, clock, tick_ms=tick_ms)
    host, _, port = bind.partition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8321), log_level="warning")
    finally:
        store.close()


@cli.command()
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--seed", default=0, type=int)
@click.option("--participants", "participants_path", type=click.Path(exists=True), default=None,
              help="Synthetic participant spec (YAML), overrides the bundle's.")
@click.option("--provider", type=click.Choice(["stub", "live"]), default="stub")
@click.option("--duration", default=None, type=int, help="Override session duration in seconds.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--out", default="./simulation-out", help="Export output directory.")
def simulate(config, seed, participants_path, provider, duration, fmt, out) -> None:
    """Run a fully headless session under the virtual clock."""
    try:
        data = read_bundle(config)
        overrides = None
        if participants_path:
            import yaml

            from .bundle import SyntheticAction, SyntheticParticipant

            raw = yaml.safe_load(Path(participants_path).read_text(encoding="utf-8")) or []
            overrides = [
                SyntheticParticipant(
                    name=p.get("name", f"Participant {i + 1}"),
                    join_offset_s=p.get("join_offset_s", 0),
                    external_id=p.get("external_id"),
                    redirect_url=p.get("redirect_url"),
                    actions=[
                        SyntheticAction(
                            offset_s=a.get("offset_s", 0),
                            type=a.get("type", "post"),
                            body=a.get("body", ""),
                            parent=a.get("parent"),
                            reaction=a.get("reaction"),
                            target=a.get("target"),
                        )
                        for a in p.get("actions", [])
                    ],
                )
                for i, p in enumerate(raw)
            ]
        result = run_simulation(
            data,
            seed=seed,
            out_dir=out,
            provider=provider,
            duration_override_s=duration,
            export_format=fmt,
            participants_override=overrides,
        )
    except ValidationFailure as exc:
        click.echo(f"invalid bundle: {exc.violations[0]}", err=True)
        sys.exit(EXIT_CONFIG_INVALID)
    except ProviderError as exc:
        click.echo(f"provider failure: {exc}", err=True)
        sys.exit(EXIT_PROVIDER_FAILURE)
    click.echo(json.dumps(result.summary, indent=2, sort_keys=True))


@cli.command()
@click.argument("instance_id")
@click.option("--data-dir", default=lambda: os.environ.get("PLAZA_DATA_DIR", "./plaza-data"))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--out", default="./export-out")
def export(instance_id, data_dir, fmt, out) -> None:
    """Export one instance from the data directory."""
    store = Store(data_dir)
    try:
        root = write_bundle(store, instance_id, out, fmt=fmt)
    except NotFoundError:
        click.echo(f"instance not found: {instance_id}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    click.echo(str(root))


@cli.command("seed-avatars")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--data-dir", default=lambda: os.environ.get("PLAZA_DATA_DIR", "./plaza-data"))
def seed_avatars(directory, data_dir) -> None:
    """Ingest an avatar image directory with a gender-tag sidecar.

    The sidecar is avatars.json mapping filename to female/male/neutral.
    Images without a sidecar entry are listed and skipped.
    """
    directory = Path(directory)
    sidecar_path = directory / "avatars.json"
    sidecar = {}
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    store = Store(data_dir)
    ingested, missing = 0, []
    for image in sorted(directory.iterdir()):
        if image.name == "avatars.json" or image.is_dir():
            continue
        tag = sidecar.get(image.name)
        if tag is None:
            missing.append(image.name)
            continue
        avatar = Avatar(id=store.new_id("av"), image_ref=str(image), gender_tag=GenderTag(tag))
        store.avatars[avatar.id] = avatar
        ingested += 1
    store.close()
    if missing:
        click.echo("missing metadata for: " + ", ".join(missing), err=True)
    click.echo(f"ingested {ingested} avatars")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
