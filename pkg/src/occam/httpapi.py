"""Minimal HTTP control API.

Handlers run threaded but funnel every mutation through one lock, so the
core keeps its single-writer semantics. Each mutating request persists the
event log before the response goes out.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .control import System
from .errors import (
    CorruptLog,
    CorruptState,
    DuplicateName,
    InsufficientResources,
    NoIdleExecutors,
    NotEnoughNodes,
    OccamError,
    Starvation,
    UnknownApplication,
    UnknownSession,
    UnknownTenant,
)

_NOT_FOUND = (UnknownTenant, UnknownApplication, UnknownSession)
_CONFLICT = (DuplicateName, InsufficientResources, NoIdleExecutors, Starvation, NotEnoughNodes)
_SERVER_ERROR = (CorruptState, CorruptLog)


def _status_for(exc: Exception) -> int:
    if isinstance(exc, _NOT_FOUND):
        return 404
    if isinstance(exc, _CONFLICT):
        return 409
    if isinstance(exc, _SERVER_ERROR):
        return 500
    return 400


def _report_rows(report) -> dict:
    return {
        "kind": report.scenario.kind.value,
        "params": report.scenario.params,
        "rows": [{"label": l, "metric": m, "value": v, "unit": u} for l, m, v, u in report.rows],
    }


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, system: System, state_path=None):
        self.system = system
        self.state_path = state_path
        self.lock = threading.Lock()
        super().__init__(address, ApiHandler)

    def persist(self) -> None:
        if self.state_path is not None:
            self.state_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.state_path.with_suffix(".tmp")
            tmp.write_text(self.system.serialize_log())
            tmp.replace(self.state_path)


class ApiHandler(BaseHTTPRequestHandler):
    server: ApiServer

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = json.loads(raw or b"{}")
        except json.JSONDecodeError:
            raise ValueError("request body is not valid JSON")
        if not isinstance(doc, dict):
            raise ValueError("request body must be a JSON object")
        return doc

    def do_GET(self):
        system = self.server.system
        with self.server.lock:
            try:
                if self.path == "/v1/nodes":
                    return self._send(200, {"nodes": system.nodes_status()})
                match = re.fullmatch(r"/v1/applications/([^/]+)", self.path)
                if match:
                    return self._send(200, system.app_status(match.group(1)))
                match = re.fullmatch(r"/v1/events(?:\?since=(\d+))?", self.path)
                if match:
                    since = int(match.group(1) or 0)
                    events = [
                        {"seq": e.seq, "t": e.t, "kind": e.kind, "payload": e.payload}
                        for e in system.events_since(since)
                    ]
                    return self._send(200, {"events": events})
            except (OccamError, ValueError) as exc:
                return self._send(_status_for(exc), {"error": type(exc).__name__, "message": str(exc)})
        self._send(404, {"error": "NotFound", "message": self.path})

    def do_POST(self):
        system = self.server.system
        with self.server.lock:
            try:
                body = self._body()
                result = self._dispatch_post(system, body)
                if result is None:
                    return self._send(404, {"error": "NotFound", "message": self.path})
                self.server.persist()
                status, payload = result
                return self._send(status, payload)
            except (OccamError, ValueError) as exc:
                self.server.persist()  # failed commands are part of the log too
                return self._send(_status_for(exc), {"error": type(exc).__name__, "message": str(exc)})

    def _dispatch_post(self, system: System, body: dict):
        if self.path == "/v1/tenants":
            tenant = system.register_tenant(body.get("name", ""), body.get("ssh_key", ""))
            return 201, {"name": tenant.name, "uid": tenant.uid, "home_path": tenant.home_path}
        if self.path == "/v1/applications":
            app_id = system.submit_application(json.dumps(body))
            return 201, {"app_id": app_id, "state": "pending"}
        match = re.fullmatch(r"/v1/applications/([^/]+)/deploy", self.path)
        if match:
            return 200, self._deploy(system, match.group(1))
        match = re.fullmatch(r"/v1/applications/([^/]+)/scale", self.path)
        if match:
            farm = system.scale_farm(match.group(1), int(body["delta"]))
            return 200, {"executors": len(farm.executors)}
        match = re.fullmatch(r"/v1/applications/([^/]+)/jobs", self.path)
        if match:
            job_id = system.submit_job(
                match.group(1),
                millicores=int(body["millicores"]),
                memory_mib=int(body["memory_mib"]),
                priority=int(body.get("priority", 0)),
                work_hs06_s=float(body.get("work_hs06_s", 0.0)),
                gpus=int(body.get("gpus", 0)),
            )
            return 201, {"job_id": job_id}
        match = re.fullmatch(r"/v1/bench/(hpl|fio|mdtest)", self.path)
        if match:
            return 200, self._bench(system, match.group(1), body)
        return None

    def _deploy(self, system: System, app_id: str) -> dict:
        record = system._app(app_id)
        kind = record.app.model.kind
        if kind == "batch-farm":
            farm = system.deploy_farm(app_id)
            return {"model": kind, "executors": len(farm.executors),
                    "access": farm.access.node_id, "manager": farm.manager.node_id}
        if kind == "pipeline":
            run = system.run_pipeline(app_id)
            return {"model": kind, "state": run.state.value, "makespan": run.makespan}
        sess = system.start_session(app_id)
        return {"model": kind, "session_id": sess.session_id, "node_id": sess.executor.node_id}

    def _bench(self, system: System, kind: str, body: dict) -> dict:
        if kind == "hpl":
            report = system.bench_hpl(
                node_counts=[int(n) for n in body.get("node_counts", [1, 2, 4, 8, 16, 32])],
                mix=body.get("mix", "light"),
                balancing=body.get("balancing", "equal"),
                per_node_work=float(body.get("per_node_work", 1000.0)),
                steps=int(body.get("steps", 10)),
                granularity=float(body.get("granularity", 0.01)),
            )
        elif kind == "fio":
            report = system.bench_fio(
                target=body.get("target", "scratch"),
                clients=int(body.get("clients", 8)),
                numjobs_per_client=int(body.get("numjobs_per_client", 2)),
                block_kib=int(body.get("block_kib", 4)),
                rwmix_read_pct=int(body.get("rwmix_read_pct", 50)),
                per_job_bytes=int(body.get("per_job_bytes", 8 * 1024**3)),
                demand_kibps=body.get("demand_kibps"),
            )
        else:
            report = system.bench_mdtest(
                branching=int(body.get("branching", 3)),
                depth=int(body.get("depth", 5)),
                items_per_dir=int(body.get("items_per_dir", 2000)),
                ranks=int(body.get("ranks", 32)),
                ppn=int(body.get("ppn", 4)),
                iterations=int(body.get("iterations", 64)),
                phases=int(body.get("phases", 6)),
                observed_runtime_s=body.get("observed_runtime_s"),
            )
        return _report_rows(report)


def make_server(system: System, port: int = 0, state_path=None) -> ApiServer:
    return ApiServer(("127.0.0.1", port), system, state_path)
