"""Command line entry point: ``hempchain <group> <command>``."""

from __future__ import annotations

import json
import sys
import threading
import time
from dataclasses import replace
from pathlib import Path

import click

from .chain import revalidate
from .domain import OperationUnit, TransactionRecord, make_record
from .node import Node, NodeConfig


def _load_node(config_path: str | None, data_dir: str | None) -> Node:
    config = NodeConfig.load(config_path) if config_path else NodeConfig()
    if data_dir:
        config = replace(config, data_dir=data_dir)
    if not config.data_dir:
        config = replace(config, data_dir="node-data")
    if not config_path:
        # without a config everything lives under the data directory
        config = replace(config, store_root=str(Path(config.data_dir) / "store"))
    return Node.load(config)


def _echo_json(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


node_options = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 help="node YAML config"),
    click.option("--data-dir", type=click.Path(file_okay=False),
                 help="state directory (overrides the config)"),
]


def with_node_options(fn):
    for option in reversed(node_options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Two-layer sharded ledger for regulated hemp supply chains."""


# -- node ------------------------------------------------------------------


@main.group()
def node():
    """Run a node."""


@node.command("run")
@with_node_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--speed", default=1.0, show_default=True, type=float,
              help="ledger seconds per wall-clock second")
def node_run(config_path, data_dir, host, port, speed):
    """Serve the HTTP API while producing blocks on the wall clock."""
    import uvicorn

    from .api import create_app

    n = _load_node(config_path, data_dir)
    stop = threading.Event()

    def ticker():
        origin = time.monotonic()
        base = n.clock
        while not stop.wait(1.0):
            n.produce_blocks(base + int((time.monotonic() - origin) * speed))
            n.save()

    thread = threading.Thread(target=ticker, name="block-producer", daemon=True)
    thread.start()
    try:
        uvicorn.run(create_app(n), host=host, port=port)
    finally:
        stop.set()
        thread.join(timeout=5)
        n.save()


# -- participants and products -------------------------------------------


@main.group()
def participant():
    """Manage participant profiles."""


@participant.command("register")
@with_node_options
@click.option("--role", required=True, help="role name, e.g. LicensedGrower")
@click.option("--info", "info_items", multiple=True, metavar="KEY=VALUE", help="profile field")
@click.option("--id", "participant_id", default=None)
def participant_register(config_path, data_dir, role, info_items, participant_id):
    n = _load_node(config_path, data_dir)
    info = {}
    for item in info_items:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint="--info")
        info[key] = value
    try:
        profile, secret = n.register_participant(role, info, participant_id)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    n.save()
    _echo_json({"participant_id": profile.participant_id, "role": profile.role.value, "secret": secret.hex()})


@main.group()
def product():
    """Create products and read their history."""


@product.command("create")
@with_node_options
@click.option("--id", "product_id", default=None)
def product_create(config_path, data_dir, product_id):
    n = _load_node(config_path, data_dir)
    try:
        pid = n.create_product(product_id)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    n.save()
    click.echo(pid)


@product.command("history")
@with_node_options
@click.argument("product_id")
def product_history(config_path, data_dir, product_id):
    """Committed records of a product, with anchored files verified."""
    from .store import StoreError

    n = _load_node(config_path, data_dir)
    try:
        items = n.retrieve_records(product_id)
    except StoreError as exc:
        raise click.ClickException(str(exc))
    _echo_json([
        {"record": item.record.to_canonical(), "shard_index": item.location.shard_index,
         "height": item.location.height, "position": item.location.position,
         "files": len(item.files)}
        for item in items
    ])


# -- records ---------------------------------------------------------------


@main.group()
def record():
    """Create records."""


def _record_from_file(n: Node, path: Path, sign_as: tuple[str, ...]) -> TransactionRecord:
    data = json.loads(path.read_text())
    if "signatures" in data:
        return TransactionRecord.from_canonical(data)
    signers = list(sign_as) or list(data.get("signers", []))
    if not signers:
        raise click.ClickException("draft record needs signers (in the file or via --sign-as)")
    try:
        return make_record(
            n.registry,
            product_id=data["product_id"],
            lot_number=data["lot_number"],
            operation=OperationUnit(data["operation"]),
            info=data["info"],
            signers=signers,
            created_at=int(data.get("created_at", n.clock)),
        )
    except (KeyError, ValueError) as exc:
        raise click.ClickException(f"malformed draft record: {exc}")


@record.command("submit")
@with_node_options
@click.argument("record_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--shard", type=int, required=True, help="area (shard) index, 1-based")
@click.option("--file", "files", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="attachment to offload and anchor")
@click.option("--sign-as", multiple=True, help="participant id signing a draft record")
@click.option("--approve/--reject", "approve", default=None,
              help="on-site verdict for a regulated record")
@click.option("--wait/--no-wait", default=True, show_default=True,
              help="drive block production until the record is final")
def record_submit(config_path, data_dir, record_file, shard, files, sign_as, approve, wait):
    """Submit RECORD_FILE, a signed record or a draft to sign with --sign-as."""
    n = _load_node(config_path, data_dir)
    rec = _record_from_file(n, record_file, sign_as)
    blobs = [p.read_bytes() for p in files]
    try:
        if wait:
            receipt = n.create_record(rec, shard, blobs, decision=approve)
        else:
            receipt = n.submit_record(rec, shard, blobs, decision=approve)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    n.save()
    _echo_json(receipt.to_canonical())
    if receipt.status.startswith("rejected"):
        sys.exit(1)


# -- ledger ----------------------------------------------------------------


@main.group()
def ledger():
    """Inspect the stored ledger."""


@ledger.command("verify")
@with_node_options
def ledger_verify(config_path, data_dir):
    """Replay and revalidate every stored block."""
    n = _load_node(config_path, data_dir)
    failure = revalidate(n.ledger)
    if failure is not None:
        _echo_json({"valid": False, "kind": failure.kind, "shard_index": failure.shard_index,
                    "height": failure.height, "reason": failure.reason})
        sys.exit(1)
    _echo_json({"valid": True, **n.status()})


@ledger.command("dump")
@with_node_options
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def ledger_dump(config_path, data_dir, out):
    n = _load_node(config_path, data_dir)
    data = n.ledger.dump()
    if out is None:
        click.echo(data.decode("utf-8"), nl=False)
    else:
        out.write_bytes(data)


@ledger.command("tick")
@with_node_options
@click.option("--until", type=int, required=True, help="ledger time in seconds")
def ledger_tick(config_path, data_dir, until):
    """Fire every block tick due up to --until."""
    n = _load_node(config_path, data_dir)
    try:
        blocks = n.produce_blocks(until)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    n.save()
    _echo_json({"produced": len(blocks), **n.status()})


# -- simulation --------------------------------------------------------------


@main.group()
def sim():
    """Season simulations."""


INTEGRITY = {"with": "with_blockchain", "without": "without_blockchain"}


def _sim_config(config_path, seed):
    from .sim import SimConfig

    config = SimConfig.load(config_path) if config_path else SimConfig()
    return config.with_seed(seed) if seed is not None else config


@sim.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["two_layer", "single_chain"]), default="two_layer", show_default=True)
@click.option("--integrity", type=click.Choice(sorted(INTEGRITY)), default="with", show_default=True)
@click.option("--seed", type=int, default=None, help="seed of the reported season (default: config seed)")
@click.option("--replications", type=int, default=30, show_default=True,
              help="seeds seed..seed+n-1 for safety.csv")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def sim_run(config_path, mode, integrity, seed, replications, out, figures):
    """Simulate a season and write CSV tables (and PNG figures) to --out."""
    from .sim import ConfigError, export_metrics, export_safety, run_replications, run_season

    try:
        config = _sim_config(config_path, seed)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    if replications < 1:
        raise click.BadParameter("need at least one replication", param_hint="--replications")
    metrics = run_season(config, mode, INTEGRITY[integrity])
    written = export_metrics(metrics, out)
    seeds = range(config.seed, config.seed + replications)
    runs = [metrics] + run_replications(config, mode, INTEGRITY[integrity], seeds[1:])
    written.update(export_safety(runs, out))
    if figures:
        from .sim.figures import render_report

        written.update(render_report(metrics, out))
    for name, path in sorted(written.items()):
        click.echo(f"{name}: {path}")
    rates = ", ".join(f"{k}={v:.4f}" for k, v in metrics.rates().items())
    click.echo(f"lots={metrics.lot_count} done={metrics.done} destroyed={metrics.destroyed} {rates}")


@sim.command("compare")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def sim_compare(config_path, seed, out):
    """Two-layer against single chain: per-mode tables plus an identical-load replay."""
    from .sim import SINGLE_CHAIN, TWO_LAYER, WITH_BLOCKCHAIN, export_metrics, replay_online, run_season
    from .sim.figures import plot_wait_percentiles
    from .sim.metrics import WAIT_HEADER, _write_rows, percentile_rows

    config = _sim_config(config_path, seed)
    runs = {}
    for mode in (TWO_LAYER, SINGLE_CHAIN):
        runs[mode] = run_season(config, mode, WITH_BLOCKCHAIN)
        export_metrics(runs[mode], out / mode)
    stream = runs[TWO_LAYER].submissions
    replayed = {mode: replay_online(config, mode, stream) for mode in (TWO_LAYER, SINGLE_CHAIN)}
    for mode, waits in replayed.items():
        _write_rows(out / f"identical_load_{mode}.csv", WAIT_HEADER, percentile_rows(waits))
    plot_wait_percentiles(replayed, out / "identical_load_online.png",
                          "Online validation waiting time, identical load")
    plot_wait_percentiles({m: r.onsite_waits for m, r in runs.items()}, out / "onsite.png",
                          "On-site verification waiting time")
    click.echo(f"wrote comparison to {out}")


@sim.command("throughput")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--load", "load_factor", type=float, default=1.5, show_default=True,
              help="offered load as a multiple of the ceiling")
@click.option("--seed", type=int, default=0, show_default=True)
def sim_throughput(config_path, load_factor, seed):
    """Windowed commit rates under a saturating Poisson workload."""
    from .sim import CHAIN_MODES, ceiling_per_minute, measure_throughput

    config = _sim_config(config_path, None)
    for mode in CHAIN_MODES:
        rates = measure_throughput(config, mode, load_factor=load_factor, seed=seed)
        click.echo(f"{mode}: ceiling {ceiling_per_minute(config, mode):.2f}/min, "
                   f"measured min {rates.min():.2f} max {rates.max():.2f} over {len(rates)} windows")


if __name__ == "__main__":
    main()
