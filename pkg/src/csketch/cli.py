"""Operator command line.

Commands work on a local data directory by default (``--data`` or the
CSKETCH_DATA environment variable). Query and ingest commands can instead
talk to a running HTTP service with ``--server URL``. Exit codes: 0 success,
1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import httpx

from csketch.core import ConfigError, config_from_dict
from csketch.forest import ForestError
from csketch.graph import GraphError
from csketch.processor import ProcessError
from csketch.simulate import Scenario, ScenarioError, generate
from csketch.store import DataStore, StoreError
from csketch.tracer import TraceError
from csketch.wire import WireError, format_user, parse_user

DATA_ERRORS = (StoreError, ConfigError, ScenarioError, TraceError, WireError, ProcessError, ForestError, GraphError)


def _parse_users(csv: str) -> list[int]:
    users = []
    for token in csv.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            users.append(parse_user(token))
        except ValueError as exc:
            raise click.UsageError(str(exc))
    if not users:
        raise click.UsageError("no users given")
    return users


@click.group()
@click.option(
    "--data",
    envvar="CSKETCH_DATA",
    default="./csketch-data",
    show_default=True,
    help="data directory (env: CSKETCH_DATA)",
)
@click.pass_context
def cli(ctx, data):
    """Contact graph sketch engine."""
    ctx.obj = {"data": Path(data)}


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--force", is_flag=True, help="overwrite an existing store")
@click.pass_context
def init(ctx, config_path, force):
    """Create an empty store from a JSON config file."""
    try:
        raw = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as exc:
        raise StoreError(f"config file {config_path} is not valid JSON: {exc}")
    extras = ("id_mode", "id_seed", "sweep_policy")
    nested = raw.get("config")
    config = config_from_dict(
        nested if nested is not None else {k: v for k, v in raw.items() if k not in extras}
    )
    store = DataStore.initialize(
        ctx.obj["data"],
        config,
        id_mode=raw.get("id_mode", "deterministic"),
        id_seed=raw.get("id_seed"),
        sweep_policy=raw.get("sweep_policy", "after-ingest"),
        force=force,
    )
    with store:
        click.echo(
            f"initialized {store.data_dir}: population {config.population}, "
            f"window {config.window_slots} slots of {config.slot_minutes} min, "
            f"{config.samples_per_slot} samples per slot"
        )


def _print_report(report: dict, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(report))
        return
    click.echo(
        "streams {streams}  samples {samples}  gaps {gaps}  contacts {contactsInstalled}  "
        "edges +{edgesCreated}/-{edgesExpired}  parse errors {parseErrors}".format(**report)
    )
    for diag in report.get("diagnostics", []):
        click.echo(f"  ! {diag}")


@cli.command()
@click.argument("paths", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--listen", metavar="HOST:PORT", help="accept streams over TCP instead of files")
@click.option("--max-connections", type=int, default=None, help="stop the listener after N connections")
@click.option("--server", metavar="URL", help="send streams to a running service instead")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def ingest(ctx, paths, listen, max_connections, server, as_json):
    """Process device streams from files or a TCP listener."""
    if listen and (paths or server):
        raise click.UsageError("--listen cannot be combined with files or --server")
    if server:
        import httpx

        totals = None
        for path in paths:
            response = httpx.post(
                f"{server.rstrip('/')}/ingest",
                content=Path(path).read_bytes(),
                headers={"content-type": "text/plain"},
                timeout=60.0,
            )
            response.raise_for_status()
            report = response.json()
            if totals is None:
                totals = report
            else:
                for key, value in report.items():
                    if key == "diagnostics":
                        totals[key].extend(value)
                    else:
                        totals[key] += value
        _print_report(totals or {"streams": 0, "samples": 0, "gaps": 0, "contactsInstalled": 0,
                                 "edgesCreated": 0, "edgesExpired": 0, "parseErrors": 0,
                                 "diagnostics": []}, as_json)
        return
    with DataStore.open(ctx.obj["data"]) as store:
        if listen:
            from csketch.listener import serve

            host, _, port = listen.rpartition(":")
            if not host or not port.isdigit():
                raise click.UsageError(f"--listen expects HOST:PORT, got {listen!r}")
            click.echo(f"listening on {host}:{port} (one stream per connection)", err=True)
            report = serve(store, host, int(port), max_connections=max_connections)
        else:
            report = store.ingest_paths(list(paths))
        _print_report(report.to_dict(), as_json)


@cli.command()
@click.option("--infected", required=True, metavar="CSV", help="comma-separated users, e.g. P2,P6")
@click.option("--levels", default=3, show_default=True, help="maximum trace depth (>= 1)")
@click.option("--server", metavar="URL")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def trace(ctx, infected, levels, server, as_json):
    """Trace direct and indirect contacts of infected users."""
    if levels < 1:
        raise click.UsageError("--levels must be >= 1")
    users = _parse_users(infected)
    if server:
        import httpx

        response = httpx.post(
            f"{server.rstrip('/')}/trace",
            json={"infected": [format_user(u) for u in users], "levels": levels},
            timeout=60.0,
        )
        if response.status_code == 422:
            raise StoreError(response.json().get("detail", "trace rejected"))
        response.raise_for_status()
        payload = response.json()
        entries = [(e["user"], e["level"], e["via"]) for e in payload["entries"]]
        edges = [(e["source"], e["target"]) for e in payload["edges"]]
        infected_out = payload["infected"]
    else:
        with DataStore.open(ctx.obj["data"]) as store:
            result = store.trace(users, levels)
        entries = [
            (format_user(e["user"]), e["level"], format_user(e["via"])) for e in result["entries"]
        ]
        edges = [(format_user(a), format_user(b)) for a, b in result["edges"]]
        infected_out = [format_user(u) for u in result["infected"]]
    if as_json:
        for user, level, via in entries:
            click.echo(json.dumps({"user": user, "level": level, "via": via}))
        for source, target in edges:
            click.echo(json.dumps({"from": source, "to": target}))
        return
    click.echo(f"infected: {', '.join(infected_out)}")
    by_level: dict[int, list[str]] = {}
    for user, level, via in entries:
        by_level.setdefault(level, []).append(f"{user} via {via}")
    for level in sorted(by_level):
        click.echo(f"level {level}: " + "; ".join(by_level[level]))
    if not by_level:
        click.echo("no contacts traced")
    click.echo("pathways: " + (", ".join(f"{a}->{b}" for a, b in edges) if edges else "none"))


@cli.command()
@click.option("--server", metavar="URL")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def clusters(ctx, server, as_json):
    """Show infection zones built from past traces."""
    if server:
        import httpx

        response = httpx.get(f"{server.rstrip('/')}/clusters", timeout=60.0)
        response.raise_for_status()
        rows = [
            {
                "root": c["root"],
                "size": c["size"],
                "members": c["members"],
                "infected": c["infected"],
                "suspected": c["suspected"],
                "edges": [[e["source"], e["target"]] for e in c["edges"]],
            }
            for c in response.json()["clusters"]
        ]
    else:
        with DataStore.open(ctx.obj["data"]) as store:
            rows = [
                {
                    "root": format_user(c["root"]),
                    "size": c["size"],
                    "members": [format_user(u) for u in c["members"]],
                    "infected": [format_user(u) for u in c["infected"]],
                    "suspected": [format_user(u) for u in c["suspected"]],
                    "edges": [[format_user(a), format_user(b)] for a, b in c["edges"]],
                }
                for c in store.clusters()
            ]
    if as_json:
        for row in rows:
            click.echo(json.dumps(row))
        return
    click.echo(f"{len(rows)} clusters")
    for row in rows:
        click.echo(
            f"  root {row['root']} size {row['size']}: "
            f"infected {', '.join(row['infected']) or '-'}; "
            f"suspected {', '.join(row['suspected']) or '-'}"
        )
        for a, b in row["edges"]:
            click.echo(f"    {a}->{b}")


@cli.command()
@click.option("--server", metavar="URL")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def stats(ctx, server, as_json):
    """Live counters and the storage estimate."""
    if server:
        import httpx

        response = httpx.get(f"{server.rstrip('/')}/stats", timeout=60.0)
        response.raise_for_status()
        data = response.json()
    else:
        with DataStore.open(ctx.obj["data"]) as store:
            data = store.stats()
    if as_json:
        click.echo(json.dumps(data))
        return
    click.echo(
        f"population {data['population']}  avg degree {data['avg_degree']}  "
        f"window {data['window_slots']} slots  now slot {data['now_slot']}  epoch {data['epoch']}"
    )
    click.echo(
        f"edges {data['edges']}  pool {data['pool_cells']} cells ({data['vacant_cells']} vacant)  "
        f"infected {data['infected']}  suspected {data['suspected']}"
    )
    click.echo(
        f"configured store estimate: {data['space_estimate_bits']:.0f} bits "
        f"(~{data['space_estimate_gb']:.6g} GB)"
    )
    click.echo(
        "covid-scale reference (10000000 users, degree 64, 1344 slots): "
        f"≈{math.ceil(data['covid_reference_gb'])} GB"
    )


@cli.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.pass_context
def gen(ctx, scenario_file, out_dir):
    """Render a scenario into wire streams plus a ground-truth file."""
    scenario = Scenario.from_json(Path(scenario_file).read_text())
    streams, truth = generate(scenario)
    out = Path(out_dir)
    (out / "streams").mkdir(parents=True, exist_ok=True)
    for user, data in streams.items():
        (out / "streams" / f"{format_user(user)}.omega").write_bytes(data)
    (out / "groundtruth.json").write_text(json.dumps(truth.to_dict(), indent=1))
    (out / "scenario.json").write_text(json.dumps(scenario.to_dict(), indent=1))
    click.echo(
        f"wrote {len(streams)} streams to {out / 'streams'} "
        f"({truth.samples} samples, {truth.detections} expected detections)"
    )


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service on the local data directory."""
    import uvicorn

    from csketch.service import create_app

    uvicorn.run(create_app(ctx.obj["data"]), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DATA_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (OSError, httpx.HTTPError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
