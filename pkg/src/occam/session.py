"""Single-node interactive sessions running user images in a sandbox share.

A session is one executor container placed up front; user images then run
as children strictly inside that share. A child that would push the running
sum past the sandbox boundary is rejected outright rather than queued --
the userspace runner cannot exceed its allotment, and a hard boundary is
the honest rendering of that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .allocator import Allocator, PartitionState, Placement, PlacementRequest, Role
from .cluster import ResourceVector, SpeedMode, node_speed
from .errors import SessionStopped
from .manifest import ComputingApplication, SessionModel
from .simcore import Simulator


class SessionState(str, Enum):
    ACTIVE = "active"
    STOPPED = "stopped"


class ExitKind(str, Enum):
    OK = "ok"
    REJECTED = "rejected"


@dataclass
class RunRecord:
    run_id: str
    image: str
    work_hs06_s: float
    start_t: float
    end_t: float
    exit: ExitKind
    share: ResourceVector


@dataclass
class Session:
    session_id: str
    app_id: str
    tenant: str
    executor: Placement
    per_core_speed: float
    children: list[RunRecord] = field(default_factory=list)
    state: SessionState = SessionState.ACTIVE
    _run_seq: int = 0
    _pending: dict[str, int] = field(default_factory=dict)

    def running_children(self, now: float) -> list[RunRecord]:
        return [c for c in self.children if c.exit is ExitKind.OK and c.end_t > now]


def start_session(session_id: str, app: ComputingApplication, alloc: Allocator, sim: Simulator) -> Session:
    """Place the execution container and open the session."""
    model = app.model
    assert isinstance(model, SessionModel)
    placements = alloc.place(
        app.app_id, [PlacementRequest(Role.SESSION_EXEC, model.share, model.node_class)]
    )
    alloc.partitions[app.app_id].state = PartitionState.RUNNING
    executor = placements[0]
    node = alloc.inv.node(executor.node_id)
    session = Session(
        session_id=session_id,
        app_id=app.app_id,
        tenant=app.tenant,
        executor=executor,
        per_core_speed=node_speed(node.node_class, SpeedMode.PER_LOGICAL_CORE),
    )
    sim.record(
        "session-started",
        {"session_id": session_id, "app_id": app.app_id, "node_id": executor.node_id,
         "share": executor.share.as_dict()},
    )
    return session


def exec_image(
    session: Session,
    image: str,
    work_hs06_s: float,
    child_share: ResourceVector,
    sim: Simulator,
) -> RunRecord:
    """Run an image inside the session's share, or reject it on overflow."""
    if session.state is not SessionState.ACTIVE:
        raise SessionStopped(f"session {session.session_id} is stopped")
    if work_hs06_s < 0:
        raise ValueError("work must be non-negative")
    if work_hs06_s > 0 and child_share.millicores == 0:
        raise ValueError("a child with work needs at least one millicore")
    session._run_seq += 1
    run_id = f"{session.session_id}-r{session._run_seq:03d}"
    used = ResourceVector()
    for child in session.running_children(sim.now):
        used = used + child.share
    if not used + child_share <= session.executor.share:
        record = RunRecord(run_id, image, work_hs06_s, sim.now, sim.now, ExitKind.REJECTED, child_share)
        session.children.append(record)
        sim.record(
            "child-rejected",
            {"session_id": session.session_id, "run_id": run_id, "image": image,
             "share": child_share.as_dict()},
        )
        return record
    if work_hs06_s == 0:
        duration = 0.0
    else:
        duration = work_hs06_s / (session.per_core_speed * child_share.millicores / 1000.0)
    end = sim.now + duration
    record = RunRecord(run_id, image, work_hs06_s, sim.now, end, ExitKind.OK, child_share)
    session.children.append(record)
    handle = sim.schedule(end, "child-finished", {"session_id": session.session_id, "run_id": run_id})
    session._pending[run_id] = handle
    sim.record(
        "child-started",
        {"session_id": session.session_id, "run_id": run_id, "image": image,
         "share": child_share.as_dict(), "end_t": round(end, 6)},
    )
    return record


def stop_session(session: Session, alloc: Allocator, sim: Simulator) -> None:
    """Terminate running children at the current instant and free the executor."""
    if session.state is not SessionState.ACTIVE:
        raise SessionStopped(f"session {session.session_id} is stopped")
    for child in session.running_children(sim.now):
        child.end_t = sim.now
        handle = session._pending.pop(child.run_id, None)
        if handle is not None:
            sim.cancel(handle)
        sim.record("child-truncated", {"session_id": session.session_id, "run_id": child.run_id})
    partition = alloc.partition(session.app_id)
    if partition is not None and partition.state is not PartitionState.RELEASED:
        alloc.release(partition)
    session.state = SessionState.STOPPED
    sim.record("session-stopped", {"session_id": session.session_id})
