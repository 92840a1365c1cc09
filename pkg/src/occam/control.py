"""Tenant registry, application lifecycle and event-sourced persistence.

Every state change enters through exactly one command; commands and their
effects are appended to the simulator's event log, which is the only
persistent artifact. Replaying a log re-executes its command stream against
a fresh system and must regenerate the log byte-for-byte -- anything else
means the log was corrupted or tampered with.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

from . import bench as bench_mod
from . import farm as farm_mod
from . import pipeline as pipeline_mod
from . import session as session_mod
from .allocator import Allocator
from .bench import Balancing, BenchReport, Mix
from .cluster import ApplianceKind, Inventory, ResourceVector, capacity, default_inventory
from .errors import (
    CorruptLog,
    DuplicateName,
    InvalidName,
    OccamError,
    UnknownApplication,
    UnknownSession,
    UnknownTenant,
    ValidationFailed,
)
from .manifest import (
    BatchFarmModel,
    ComputingApplication,
    PipelineModel,
    SessionModel,
    parse_manifest,
    validate,
)
from .simcore import Event, EventLog, Simulator

TENANT_NAME_RE = re.compile(r"^[a-z][a-z0-9_-]{1,31}$")
FIRST_UID = 2000
DEFAULT_SEED = 42


@dataclass(frozen=True)
class Tenant:
    name: str
    ssh_pubkey: str
    home_path: str
    uid: int


@dataclass(frozen=True)
class Command:
    seq: int
    issued_at: float
    verb: str
    args: dict


@dataclass
class AppRecord:
    app: ComputingApplication
    name: str
    state: str = "pending"
    farm: farm_mod.VirtualFarm | None = None
    run: pipeline_mod.PipelineRun | None = None
    session_ids: list[str] = field(default_factory=list)


class System:
    """Single-writer core; CLI and HTTP both reduce to its command stream."""

    def __init__(self, seed: int = DEFAULT_SEED, inventory: Inventory | None = None):
        self.sim = Simulator(seed)
        self.inv = inventory if inventory is not None else default_inventory()
        self.alloc = Allocator(self.inv)
        self.tenants: dict[str, Tenant] = {}
        self.apps: dict[str, AppRecord] = {}
        self.sessions: dict[str, session_mod.Session] = {}
        self._cmd_seq = 0
        self._job_seq = 0
        self._session_seq = 0

    # -- command plumbing ---------------------------------------------------

    def _command(self, verb: str, args: dict) -> Command:
        cmd = Command(self._cmd_seq, self.sim.now, verb, args)
        self._cmd_seq += 1
        self.sim.record("command", {"cmd_seq": cmd.seq, "verb": verb, "args": args})
        return cmd

    def _fail(self, verb: str, exc: Exception) -> None:
        self.sim.record(
            "command-failed",
            {"verb": verb, "error": type(exc).__name__, "message": str(exc)},
        )

    # -- tenants ------------------------------------------------------------

    def register_tenant(self, name: str, ssh_pubkey: str) -> Tenant:
        self._command("tenant-add", {"name": name, "ssh_pubkey": ssh_pubkey})
        try:
            if not TENANT_NAME_RE.match(name or ""):
                raise InvalidName(f"tenant name {name!r} is not allowed")
            if not ssh_pubkey:
                raise InvalidName("ssh public key must not be empty")
            if name in self.tenants:
                raise DuplicateName(f"tenant {name!r} already exists")
        except OccamError as exc:
            self._fail("tenant-add", exc)
            raise
        tenant = Tenant(
            name=name,
            ssh_pubkey=ssh_pubkey,
            home_path=f"/archive/home/{name}",
            uid=FIRST_UID + len(self.tenants),
        )
        self.tenants[name] = tenant
        self.sim.record("tenant-registered", {"name": name, "uid": tenant.uid, "home": tenant.home_path})
        return tenant

    # -- applications -------------------------------------------------------

    def submit_application(self, manifest_text: str) -> str:
        self._command("app-submit", {"manifest": manifest_text})
        try:
            app = parse_manifest(manifest_text)
            if app.tenant not in self.tenants:
                raise UnknownTenant(f"tenant {app.tenant!r} is not registered")
            report = validate(app, self.inv)
            if not report.ok:
                raise ValidationFailed(report)
        except (OccamError, ValueError) as exc:
            self._fail("app-submit", exc)
            raise
        digest = hashlib.sha256(f"{app.tenant}:{app.app_id}:{len(self.apps)}".encode()).hexdigest()
        app_id = digest[:12]
        record = AppRecord(app=replace(app, app_id=app_id), name=app.app_id)
        self.apps[app_id] = record
        self.sim.record(
            "app-submitted",
            {"app_id": app_id, "name": record.name, "tenant": app.tenant,
             "model": record.app.model.kind,
             "warnings": [msg for sev, msg in report.issues if sev == "warning"]},
        )
        return app_id

    def _app(self, app_id: str) -> AppRecord:
        if app_id not in self.apps:
            raise UnknownApplication(f"no application {app_id!r}")
        return self.apps[app_id]

    def _typed_app(self, app_id: str, model_type, what: str) -> AppRecord:
        record = self._app(app_id)
        if not isinstance(record.app.model, model_type):
            raise ValueError(f"application {app_id} is not a {what}")
        return record

    # -- batch farms ----------------------------------------------------------

    def deploy_farm(self, app_id: str) -> farm_mod.VirtualFarm:
        self._command("farm-deploy", {"app_id": app_id})
        try:
            record = self._typed_app(app_id, BatchFarmModel, "batch farm")
            if record.farm is not None:
                raise ValueError(f"application {app_id} is already deployed")
            record.farm = farm_mod.deploy_farm(record.app, self.alloc, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("farm-deploy", exc)
            raise
        record.state = "deployed"
        return record.farm

    def scale_farm(self, app_id: str, delta: int) -> farm_mod.VirtualFarm:
        self._command("farm-scale", {"app_id": app_id, "delta": delta})
        try:
            record = self._typed_app(app_id, BatchFarmModel, "batch farm")
            if record.farm is None:
                raise ValueError(f"application {app_id} is not deployed")
            return farm_mod.scale(record.farm, delta, self.alloc, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("farm-scale", exc)
            raise

    def submit_job(
        self,
        app_id: str,
        millicores: int,
        memory_mib: int,
        priority: int = 0,
        work_hs06_s: float = 0.0,
        gpus: int = 0,
    ) -> str:
        self._command(
            "job-submit",
            {"app_id": app_id, "millicores": millicores, "memory_mib": memory_mib,
             "priority": priority, "work_hs06_s": work_hs06_s, "gpus": gpus},
        )
        try:
            record = self._typed_app(app_id, BatchFarmModel, "batch farm")
            if record.farm is None:
                raise ValueError(f"application {app_id} is not deployed")
            job_id = f"j{self._job_seq:04d}"
            job = farm_mod.JobAd(
                job_id=job_id,
                request=ResourceVector(millicores, memory_mib, gpus),
                priority=priority,
                work_hs06_s=work_hs06_s,
            )
            farm_mod.submit_job(record.farm, job)
        except (OccamError, ValueError) as exc:
            self._fail("job-submit", exc)
            raise
        self._job_seq += 1
        self.sim.record(
            "job-submitted",
            {"app_id": app_id, "job_id": job_id, "priority": priority,
             "work_hs06_s": work_hs06_s, "request": job.request.as_dict()},
        )
        return job_id

    def run_farm(self, app_id: str) -> list[tuple[str, float, float]]:
        self._command("farm-run", {"app_id": app_id})
        try:
            record = self._typed_app(app_id, BatchFarmModel, "batch farm")
            if record.farm is None:
                raise ValueError(f"application {app_id} is not deployed")
            return farm_mod.run_jobs(record.farm, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("farm-run", exc)
            raise

    # -- pipelines ------------------------------------------------------------

    def run_pipeline(self, app_id: str) -> pipeline_mod.PipelineRun:
        self._command("pipeline-run", {"app_id": app_id})
        try:
            record = self._typed_app(app_id, PipelineModel, "pipeline")
        except (OccamError, ValueError) as exc:
            self._fail("pipeline-run", exc)
            raise
        try:
            record.run = pipeline_mod.run_pipeline(record.app, self.alloc, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("pipeline-run", exc)
            failed_run = getattr(exc, "run", None)
            if failed_run is not None:
                record.run = failed_run
            record.state = "failed"
            raise
        record.state = "done"
        return record.run

    # -- sessions -------------------------------------------------------------

    def start_session(self, app_id: str) -> session_mod.Session:
        self._command("session-start", {"app_id": app_id})
        try:
            record = self._typed_app(app_id, SessionModel, "session")
            session_id = f"s{self._session_seq:04d}"
            sess = session_mod.start_session(session_id, record.app, self.alloc, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("session-start", exc)
            raise
        self._session_seq += 1
        self.sessions[sess.session_id] = sess
        record.session_ids.append(sess.session_id)
        record.state = "active"
        return sess

    def _session(self, session_id: str) -> session_mod.Session:
        if session_id not in self.sessions:
            raise UnknownSession(f"no session {session_id!r}")
        return self.sessions[session_id]

    def exec_in_session(
        self,
        session_id: str,
        image: str,
        work_hs06_s: float,
        millicores: int,
        memory_mib: int,
        gpus: int = 0,
    ) -> session_mod.RunRecord:
        self._command(
            "session-exec",
            {"session_id": session_id, "image": image, "work_hs06_s": work_hs06_s,
             "millicores": millicores, "memory_mib": memory_mib, "gpus": gpus},
        )
        try:
            sess = self._session(session_id)
            return session_mod.exec_image(
                sess, image, work_hs06_s, ResourceVector(millicores, memory_mib, gpus), self.sim
            )
        except (OccamError, ValueError) as exc:
            self._fail("session-exec", exc)
            raise

    def stop_session(self, session_id: str) -> None:
        self._command("session-stop", {"session_id": session_id})
        try:
            sess = self._session(session_id)
            session_mod.stop_session(sess, self.alloc, self.sim)
        except (OccamError, ValueError) as exc:
            self._fail("session-stop", exc)
            raise
        record = self.apps.get(sess.app_id)
        if record is not None:
            record.state = "stopped"

    # -- benches --------------------------------------------------------------

    def bench_hpl(
        self,
        node_counts: list[int],
        mix: str = "light",
        balancing: str = "equal",
        per_node_work: float = 1000.0,
        steps: int = 10,
        granularity: float = 0.01,
    ) -> BenchReport:
        self._command(
            "bench-hpl",
            {"node_counts": list(node_counts), "mix": mix, "balancing": balancing,
             "per_node_work": per_node_work, "steps": steps, "granularity": granularity},
        )
        try:
            report = bench_mod.hpl_scenario(
                self.inv, list(node_counts), per_node_work, steps, Mix(mix), Balancing(balancing), granularity
            )
        except (OccamError, ValueError) as exc:
            self._fail("bench-hpl", exc)
            raise
        self._record_bench(report)
        return report

    def bench_fio(
        self,
        target: str = "scratch",
        clients: int = 8,
        numjobs_per_client: int = 2,
        block_kib: int = 4,
        rwmix_read_pct: int = 50,
        per_job_bytes: int = 8 * 1024**3,
        demand_kibps: float | None = None,
    ) -> BenchReport:
        self._command(
            "bench-fio",
            {"target": target, "clients": clients, "numjobs_per_client": numjobs_per_client,
             "block_kib": block_kib, "rwmix_read_pct": rwmix_read_pct,
             "per_job_bytes": per_job_bytes, "demand_kibps": demand_kibps},
        )
        try:
            report = bench_mod.fio_scenario(
                self.inv, ApplianceKind(target), clients, numjobs_per_client,
                block_kib, rwmix_read_pct, per_job_bytes, demand_kibps,
            )
        except (OccamError, ValueError) as exc:
            self._fail("bench-fio", exc)
            raise
        self._record_bench(report)
        return report

    def bench_mdtest(
        self,
        branching: int = 3,
        depth: int = 5,
        items_per_dir: int = 2000,
        ranks: int = 32,
        ppn: int = 4,
        iterations: int = 64,
        phases: int = 6,
        observed_runtime_s: float | None = None,
    ) -> BenchReport:
        self._command(
            "bench-mdtest",
            {"branching": branching, "depth": depth, "items_per_dir": items_per_dir,
             "ranks": ranks, "ppn": ppn, "iterations": iterations, "phases": phases,
             "observed_runtime_s": observed_runtime_s},
        )
        try:
            if observed_runtime_s is not None:
                ops = bench_mod.mdtest_op_count(branching, depth, items_per_dir, ranks, iterations, phases)
                rate = bench_mod.calibrate_metadata_rate(self.inv, observed_runtime_s, ops)
                self.sim.record("metadata-calibrated", {"rate_ops_per_s": rate, "op_count": ops})
            report = bench_mod.mdtest_scenario(
                self.inv, branching, depth, items_per_dir, ranks, ppn, iterations, phases
            )
        except (OccamError, ValueError) as exc:
            self._fail("bench-mdtest", exc)
            raise
        self._record_bench(report)
        return report

    def _record_bench(self, report: BenchReport) -> None:
        self.sim.record(
            "bench-run",
            {"kind": report.scenario.kind.value, "params": report.scenario.params,
             "rows": [list(r) for r in report.rows]},
        )

    # -- inspection -----------------------------------------------------------

    def nodes_status(self) -> list[dict]:
        used: dict[str, ResourceVector] = {}
        for p in self.alloc.live.values():
            used[p.node_id] = used.get(p.node_id, ResourceVector()) + p.share
        rows = []
        for node in sorted(self.inv.nodes, key=lambda n: n.id):
            cap = capacity(node)
            free = cap - used.get(node.id, ResourceVector())
            rows.append(
                {"id": node.id, "class": node.node_class.value,
                 "capacity": cap.as_dict(), "available": free.as_dict()}
            )
        return rows

    def app_status(self, app_id: str) -> dict:
        record = self._app(app_id)
        status = {
            "app_id": app_id,
            "name": record.name,
            "tenant": record.app.tenant,
            "model": record.app.model.kind,
            "state": record.state,
        }
        if record.farm is not None:
            status["executors"] = len(record.farm.executors)
            status["queue"] = [
                {"job_id": j.job_id, "state": j.state.value, "priority": j.priority}
                for j in record.farm.queue
            ]
        if record.run is not None:
            status["stages"] = [
                {"name": r.name, "start_t": r.start_t, "end_t": r.end_t,
                 "parallelism_used": r.parallelism_used}
                for r in record.run.stage_records
            ]
            status["run_state"] = record.run.state.value
        if record.session_ids:
            status["sessions"] = [
                {"session_id": sid, "state": self.sessions[sid].state.value}
                for sid in record.session_ids
            ]
        return status

    def events_since(self, seq: int = 0) -> list[Event]:
        return [e for e in self.sim.log.events if e.seq >= seq]

    def serialize_log(self) -> str:
        return self.sim.log.serialize()

    # -- replay ---------------------------------------------------------------

    _DISPATCH = {
        "tenant-add": lambda s, a: s.register_tenant(a["name"], a["ssh_pubkey"]),
        "app-submit": lambda s, a: s.submit_application(a["manifest"]),
        "farm-deploy": lambda s, a: s.deploy_farm(a["app_id"]),
        "farm-scale": lambda s, a: s.scale_farm(a["app_id"], a["delta"]),
        "job-submit": lambda s, a: s.submit_job(
            a["app_id"], a["millicores"], a["memory_mib"], a["priority"], a["work_hs06_s"], a["gpus"]
        ),
        "farm-run": lambda s, a: s.run_farm(a["app_id"]),
        "pipeline-run": lambda s, a: s.run_pipeline(a["app_id"]),
        "session-start": lambda s, a: s.start_session(a["app_id"]),
        "session-exec": lambda s, a: s.exec_in_session(
            a["session_id"], a["image"], a["work_hs06_s"], a["millicores"], a["memory_mib"], a["gpus"]
        ),
        "session-stop": lambda s, a: s.stop_session(a["session_id"]),
        "bench-hpl": lambda s, a: s.bench_hpl(
            a["node_counts"], a["mix"], a["balancing"], a["per_node_work"], a["steps"], a["granularity"]
        ),
        "bench-fio": lambda s, a: s.bench_fio(
            a["target"], a["clients"], a["numjobs_per_client"], a["block_kib"],
            a["rwmix_read_pct"], a["per_job_bytes"], a["demand_kibps"]
        ),
        "bench-mdtest": lambda s, a: s.bench_mdtest(
            a["branching"], a["depth"], a["items_per_dir"], a["ranks"], a["ppn"],
            a["iterations"], a["phases"], a["observed_runtime_s"]
        ),
    }

    @classmethod
    def replay(cls, text: str) -> "System":
        """Rebuild a system by re-executing a log's command stream.

        The rebuilt system's serialized log must equal the input byte for
        byte; any divergence raises CorruptLog.
        """
        log = EventLog.parse(text)
        system = cls(seed=log.seed)
        for event in log.events:
            if event.kind != "command":
                continue
            verb = event.payload.get("verb")
            handler = cls._DISPATCH.get(verb)
            if handler is None:
                raise CorruptLog(f"unknown command verb {verb!r} at seq {event.seq}")
            try:
                handler(system, event.payload["args"])
            except (OccamError, ValueError):
                # The failure itself was recorded; replay carries on exactly
                # as the original run did.
                continue
        rebuilt = system.serialize_log()
        if rebuilt != text:
            raise CorruptLog("log does not match its deterministic re-execution")
        return system
