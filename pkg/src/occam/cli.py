"""Command-line surface; a thin shell over the control-plane command stream.

State lives in an event-log file under the state directory: every
invocation replays the log, applies one command, and writes the log back.
Exit codes: 0 success, 2 validation or schema error, 3 insufficient
resources, 4 corrupt state or log.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import bench as bench_mod
from . import fixture_path
from .control import DEFAULT_SEED, System
from .errors import (
    CorruptLog,
    CorruptState,
    InsufficientResources,
    NoIdleExecutors,
    NotEnoughNodes,
    OccamError,
    Starvation,
)

EXIT_VALIDATION = 2
EXIT_RESOURCES = 3
EXIT_CORRUPT = 4

_RESOURCE_ERRORS = (InsufficientResources, NoIdleExecutors, Starvation, NotEnoughNodes)
_CORRUPT_ERRORS = (CorruptState, CorruptLog)


def _state_path(state_dir: str | None) -> Path:
    root = Path(state_dir or os.environ.get("OCCAM_STATE_DIR", "./state"))
    return root / "events.jsonl"


def _seed() -> int:
    return int(os.environ.get("OCCAM_SEED", DEFAULT_SEED))


def load_system(state_dir: str | None) -> tuple[System, Path]:
    path = _state_path(state_dir)
    if path.exists():
        return System.replay(path.read_text()), path
    return System(seed=_seed()), path


def save_system(system: System, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(system.serialize_log())
    tmp.replace(path)


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, _CORRUPT_ERRORS):
        return EXIT_CORRUPT
    if isinstance(exc, _RESOURCE_ERRORS):
        return EXIT_RESOURCES
    return EXIT_VALIDATION


class _Cmd:
    """Load state, run one command, persist, translate errors to exit codes."""

    def __init__(self, state_dir: str | None):
        self.system, self.path = load_system(state_dir)

    def __enter__(self) -> System:
        return self.system

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None:
            save_system(self.system, self.path)
            return False
        if isinstance(exc, (OccamError, ValueError)):
            save_system(self.system, self.path)  # failed commands are logged too
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
        return False


@click.group()
@click.option("--state-dir", envvar="OCCAM_STATE_DIR", default=None, help="Event-log directory.")
@click.pass_context
def cli(ctx, state_dir):
    """Partition a heterogeneous cluster into per-application sub-clusters."""
    ctx.obj = state_dir


@cli.group()
def inventory():
    """Inspect the cluster inventory."""


@inventory.command("show")
@click.pass_obj
def inventory_show(state_dir):
    system, _ = load_system(state_dir)
    for row in system.nodes_status():
        cap, avail = row["capacity"], row["available"]
        click.echo(
            f"{row['id']}  {row['class']:<5}  "
            f"cores {avail['millicores']:>6}/{cap['millicores']:<6}  "
            f"mem {avail['memory_mib']:>6}/{cap['memory_mib']:<6} MiB  "
            f"gpus {avail['gpus']}/{cap['gpus']}"
        )
    for s in system.inv.storage:
        rate = f", metadata {s.metadata_rate_ops_per_s:.1f} ops/s" if s.metadata_rate_ops_per_s else ""
        click.echo(
            f"{s.kind.value}: {s.capacity_tb} TB, read {s.read_cap_kibps} kiB/s, "
            f"write {s.write_cap_kibps} kiB/s{rate}"
        )
    for l in system.inv.links:
        click.echo(f"{l.kind.value}: {l.bandwidth_gbps:g} Gb/s, {l.topology.value}")


@cli.group()
def tenant():
    """Tenant registration."""


@tenant.command("add")
@click.argument("name")
@click.option("--ssh-key", "ssh_key", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def tenant_add(state_dir, name, ssh_key):
    with _Cmd(state_dir) as system:
        t = system.register_tenant(name, Path(ssh_key).read_text().strip())
        click.echo(f"tenant {t.name}: uid {t.uid}, home {t.home_path}")


@cli.group()
def app():
    """Submit and inspect computing applications."""


@app.command("submit")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def app_submit(state_dir, manifest):
    with _Cmd(state_dir) as system:
        app_id = system.submit_application(Path(manifest).read_text())
        click.echo(app_id)


@app.command("status")
@click.argument("app_id")
@click.pass_obj
def app_status(state_dir, app_id):
    with _Cmd(state_dir) as system:
        click.echo(json.dumps(system.app_status(app_id), indent=2))


@cli.group()
def farm():
    """Virtual batch farm lifecycle."""


@farm.command("deploy")
@click.argument("app_id")
@click.pass_obj
def farm_deploy(state_dir, app_id):
    with _Cmd(state_dir) as system:
        f = system.deploy_farm(app_id)
        click.echo(
            f"farm {app_id}: access {f.access.node_id}, manager {f.manager.node_id}, "
            f"{len(f.executors)} executors"
        )


@farm.command("scale")
@click.argument("app_id")
@click.option("--delta", type=int, required=True)
@click.pass_obj
def farm_scale(state_dir, app_id, delta):
    with _Cmd(state_dir) as system:
        f = system.scale_farm(app_id, delta)
        click.echo(f"farm {app_id}: {len(f.executors)} executors")


@farm.command("run")
@click.argument("app_id")
@click.pass_obj
def farm_run(state_dir, app_id):
    with _Cmd(state_dir) as system:
        for job_id, start, end in system.run_farm(app_id):
            click.echo(f"{job_id}  start {start:.6f}  end {end:.6f}")


@cli.group()
def job():
    """Batch job submission."""


@job.command("submit")
@click.argument("app_id")
@click.option("--millicores", type=int, required=True)
@click.option("--memory-mib", type=int, required=True)
@click.option("--priority", type=int, default=0)
@click.option("--work", "work_hs06_s", type=float, default=0.0, help="Job work in HS06*s.")
@click.pass_obj
def job_submit(state_dir, app_id, millicores, memory_mib, priority, work_hs06_s):
    with _Cmd(state_dir) as system:
        job_id = system.submit_job(app_id, millicores, memory_mib, priority, work_hs06_s)
        click.echo(job_id)


@cli.group()
def pipeline():
    """Staged workflow execution."""


@pipeline.command("run")
@click.argument("app_id")
@click.pass_obj
def pipeline_run(state_dir, app_id):
    with _Cmd(state_dir) as system:
        run = system.run_pipeline(app_id)
        for rec in run.stage_records:
            click.echo(
                f"{rec.name}  start {rec.start_t:.6f}  end {rec.end_t:.6f}  "
                f"parallelism {rec.parallelism_used}"
            )
        click.echo(f"makespan {run.makespan:.6f} s")


@cli.group()
def session():
    """Single-node interactive sessions."""


@session.command("start")
@click.argument("app_id")
@click.pass_obj
def session_start(state_dir, app_id):
    with _Cmd(state_dir) as system:
        sess = system.start_session(app_id)
        click.echo(f"{sess.session_id} on {sess.executor.node_id}")


@session.command("exec")
@click.argument("session_id")
@click.option("--image", required=True)
@click.option("--work", "work_hs06_s", type=float, default=0.0)
@click.option("--millicores", type=int, required=True)
@click.option("--memory-mib", type=int, required=True)
@click.pass_obj
def session_exec(state_dir, session_id, image, work_hs06_s, millicores, memory_mib):
    with _Cmd(state_dir) as system:
        rec = system.exec_in_session(session_id, image, work_hs06_s, millicores, memory_mib)
        click.echo(f"{rec.run_id}  {rec.exit.value}  start {rec.start_t:.6f}  end {rec.end_t:.6f}")


@session.command("stop")
@click.argument("session_id")
@click.pass_obj
def session_stop(state_dir, session_id):
    with _Cmd(state_dir) as system:
        system.stop_session(session_id)
        click.echo(f"{session_id} stopped")


@cli.group()
def bench():
    """Benchmark scenarios over the calibrated models."""


def _echo_report(report, out):
    if out:
        bench_mod.emit_csv(report, out)
        click.echo(out)
    else:
        for label, metric, value, unit in report.rows:
            click.echo(f"{label}  {metric} = {value} {unit}")


@bench.command("hpl")
@click.option("--nodes", default=None, help="Comma-separated node counts.")
@click.option("--mix", type=click.Choice(["light", "mixed"]), default=None)
@click.option("--balance", type=click.Choice(["equal", "proportional"]), default=None)
@click.option("--work", type=float, default=None, help="Per-node work in HS06*s.")
@click.option("--steps", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def bench_hpl(state_dir, nodes, mix, balance, work, steps, out):
    defaults = json.loads(fixture_path("bench/hpl.json").read_text())
    counts = [int(n) for n in nodes.split(",")] if nodes else defaults["node_counts"]
    with _Cmd(state_dir) as system:
        report = system.bench_hpl(
            node_counts=counts,
            mix=mix or defaults["mix"],
            balancing=balance or defaults["balancing"],
            per_node_work=work if work is not None else defaults["per_node_work"],
            steps=steps if steps is not None else defaults["steps"],
            granularity=defaults["granularity"],
        )
        _echo_report(report, out)


@bench.command("fio")
@click.option("--target", type=click.Choice(["scratch", "archive"]), default="scratch")
@click.option("--clients", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def bench_fio(state_dir, target, clients, out):
    defaults = json.loads(fixture_path("bench/fio.json").read_text())
    section = defaults[target]
    with _Cmd(state_dir) as system:
        report = system.bench_fio(
            target=target,
            clients=clients if clients is not None else defaults["clients"],
            numjobs_per_client=section["numjobs_per_client"],
            block_kib=section["block_kib"],
            rwmix_read_pct=section["rwmix_read_pct"],
            per_job_bytes=section["per_job_bytes"],
        )
        _echo_report(report, out)


@bench.command("mdtest")
@click.option("--phases", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def bench_mdtest(state_dir, phases, out):
    defaults = json.loads(fixture_path("bench/mdtest.json").read_text())
    with _Cmd(state_dir) as system:
        report = system.bench_mdtest(
            branching=defaults["branching"],
            depth=defaults["depth"],
            items_per_dir=defaults["items_per_dir"],
            ranks=defaults["ranks"],
            ppn=defaults["ppn"],
            iterations=defaults["iterations"],
            phases=phases if phases is not None else defaults["phases"],
            observed_runtime_s=defaults["observed_runtime_s"],
        )
        _echo_report(report, out)


@cli.command("replay")
@click.argument("log_file", type=click.Path(exists=True, dir_okay=False))
def replay_cmd(log_file):
    """Rebuild state from a log and verify it re-serializes byte-identically."""
    text = Path(log_file).read_text()
    try:
        system = System.replay(text)
    except (OccamError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    click.echo(
        f"replayed {len(system.sim.log.events)} events: "
        f"{len(system.tenants)} tenants, {len(system.apps)} applications, "
        f"clock at {system.sim.now:.6f} s"
    )


@click.group()
def occamd():
    """Control-plane daemon."""


@occamd.command("serve")
@click.option("--port", type=int, default=8421)
@click.option("--state-dir", envvar="OCCAM_STATE_DIR", default=None)
def serve(port, state_dir):
    """Serve the HTTP API, persisting state to the event log."""
    from .httpapi import make_server

    system, path = load_system(state_dir)
    server = make_server(system, port=port, state_path=path)
    click.echo(f"listening on {server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    cli()
