"""On-demand virtual batch farms: deployment, job queue and matchmaking.

A farm is one access container, one central manager container and a set of
executor containers. Executors expose dynamic slots: matchmaking carves
fractions out of a slot's free vector, so a whole-node executor can host
many small jobs at once. The negotiation cycle is priority-ordered greedy
best-fit, which keeps every cycle a deterministic function of the queue and
slot snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .allocator import Allocator, PlacementRequest, Placement, PartitionState, Role
from .cluster import ResourceVector, SpeedMode, node_speed
from .errors import FarmNotRunning, InsufficientResources, NoIdleExecutors, Starvation
from .manifest import BatchFarmModel, ComputingApplication
from .simcore import Simulator

# Access node and central manager both run as small service containers.
SERVICE_SHARE = ResourceVector(millicores=1000, memory_mib=2048, gpus=0)


class JobState(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    DONE = "done"


class FarmState(str, Enum):
    RUNNING = "running"
    RELEASED = "released"


@dataclass
class JobAd:
    job_id: str
    request: ResourceVector
    priority: int
    work_hs06_s: float
    state: JobState = JobState.IDLE

    def __post_init__(self):
        if self.work_hs06_s < 0:
            raise ValueError("job work must be non-negative")


@dataclass
class SlotAd:
    slot_id: str
    executor_id: str
    free: ResourceVector
    node_speed_per_core: float


@dataclass(frozen=True)
class Match:
    job_id: str
    slot_id: str
    granted: ResourceVector


@dataclass
class VirtualFarm:
    app_id: str
    model: BatchFarmModel
    access: Placement
    manager: Placement
    executors: list[Placement]
    queue: list[JobAd] = field(default_factory=list)
    slots: list[SlotAd] = field(default_factory=list)
    state: FarmState = FarmState.RUNNING
    _submit_seq: int = 0

    def slot(self, slot_id: str) -> SlotAd:
        for s in self.slots:
            if s.slot_id == slot_id:
                return s
        raise KeyError(slot_id)

    def job(self, job_id: str) -> JobAd:
        for j in self.queue:
            if j.job_id == job_id:
                return j
        raise KeyError(job_id)


def _executor_requests(model: BatchFarmModel, count: int) -> list[PlacementRequest]:
    share = ResourceVector() if model.whole_node else model.executor_share
    return [
        PlacementRequest(Role.EXECUTOR, share, model.node_class, whole_node=model.whole_node)
        for _ in range(count)
    ]


def _make_slot(farm_or_alloc, placement: Placement) -> SlotAd:
    node = farm_or_alloc.inv.node(placement.node_id)
    return SlotAd(
        slot_id=placement.container_id,
        executor_id=placement.container_id,
        free=placement.share,
        node_speed_per_core=node_speed(node.node_class, SpeedMode.PER_LOGICAL_CORE),
    )


def deploy_farm(app: ComputingApplication, alloc: Allocator, sim: Simulator) -> VirtualFarm:
    """Place the service containers plus executors and bring the farm up."""
    model = app.model
    assert isinstance(model, BatchFarmModel)
    service = [
        PlacementRequest(Role.ACCESS, SERVICE_SHARE, model.node_class),
        PlacementRequest(Role.MANAGER, SERVICE_SHARE, model.node_class),
    ]
    requests = service + _executor_requests(model, model.executors)
    try:
        placements = alloc.place(app.app_id, requests)
    except InsufficientResources:
        # Whole-node farms can consume every node of their class; the two
        # service containers then spill onto whatever class has room.
        service = [
            PlacementRequest(Role.ACCESS, SERVICE_SHARE, None),
            PlacementRequest(Role.MANAGER, SERVICE_SHARE, None),
        ]
        placements = alloc.place(app.app_id, service + _executor_requests(model, model.executors))
    access, manager = placements[0], placements[1]
    executors = placements[2:]
    farm = VirtualFarm(app_id=app.app_id, model=model, access=access, manager=manager, executors=executors)
    farm.slots = [_make_slot(alloc, p) for p in executors]
    alloc.partitions[app.app_id].state = PartitionState.RUNNING
    sim.record(
        "farm-deployed",
        {
            "app_id": app.app_id,
            "access": access.node_id,
            "manager": manager.node_id,
            "executors": [p.node_id for p in executors],
            "placements": [
                {"container_id": p.container_id, "node_id": p.node_id, "role": p.role.value, "share": p.share.as_dict()}
                for p in placements
            ],
        },
    )
    return farm


def submit_job(farm: VirtualFarm, job: JobAd) -> None:
    """Queue a job; the queue stays ordered by priority, FIFO within a priority."""
    if farm.state is not FarmState.RUNNING:
        raise FarmNotRunning(f"farm {farm.app_id} is {farm.state.value}")
    farm.queue.append(job)
    farm._submit_seq += 1
    farm.queue.sort(key=lambda j: -j.priority)  # stable: equal priorities keep order


def negotiate(farm: VirtualFarm) -> list[Match]:
    """One matchmaking cycle.

    Walks the queue in order and gives each idle job the best-fit slot whose
    free vector dominates its request, shrinking that slot as it goes. The
    result is maximal: afterwards no idle job fits any remaining slot.
    """
    if farm.state is not FarmState.RUNNING:
        raise FarmNotRunning(f"farm {farm.app_id} is {farm.state.value}")
    matches = []
    for job in farm.queue:
        if job.state is not JobState.IDLE:
            continue
        best = None
        for slot in farm.slots:
            if job.request <= slot.free:
                remainder = slot.free - job.request
                key = (remainder.millicores, remainder.memory_mib, slot.slot_id)
                if best is None or key < best[0]:
                    best = (key, slot)
        if best is None:
            continue
        slot = best[1]
        slot.free = slot.free - job.request
        job.state = JobState.RUNNING
        matches.append(Match(job_id=job.job_id, slot_id=slot.slot_id, granted=job.request))
    return matches


def scale(farm: VirtualFarm, delta: int, alloc: Allocator, sim: Simulator) -> VirtualFarm:
    """Grow by placing fresh executors, or shrink by retiring idle ones."""
    if farm.state is not FarmState.RUNNING:
        raise FarmNotRunning(f"farm {farm.app_id} is {farm.state.value}")
    if delta == 0:
        raise ValueError("delta must be non-zero")
    if len(farm.executors) + delta < 1:
        raise ValueError("a running farm keeps at least one executor")
    if delta > 0:
        placements = alloc.place(farm.app_id, _executor_requests(farm.model, delta))
        farm.executors.extend(placements)
        farm.slots.extend(_make_slot(alloc, p) for p in placements)
        added = [p.node_id for p in placements]
        removed = []
    else:
        busy = {
            s.executor_id
            for s, p in zip(farm.slots, farm.executors)
            if s.free != p.share
        }
        idle = [p for p in farm.executors if p.container_id not in busy]
        if len(idle) < -delta:
            raise NoIdleExecutors(f"only {len(idle)} idle executors, cannot shrink by {-delta}")
        victims = sorted(idle, key=lambda p: p.node_id, reverse=True)[: -delta]
        victim_ids = {p.container_id for p in victims}
        alloc.release_containers(farm.app_id, sorted(victim_ids))
        farm.executors = [p for p in farm.executors if p.container_id not in victim_ids]
        farm.slots = [s for s in farm.slots if s.executor_id not in victim_ids]
        added = []
        removed = [p.node_id for p in victims]
    sim.record(
        "farm-scaled",
        {"app_id": farm.app_id, "delta": delta, "added": added, "removed": removed,
         "executors": len(farm.executors)},
    )
    return farm


def run_jobs(farm: VirtualFarm, sim: Simulator) -> list[tuple[str, float, float]]:
    """Drain the queue by alternating negotiation and simulated execution.

    A job of work W granted c millicores on an executor with per-core speed s
    runs for W / (s * c / 1000) seconds. Returns (job_id, start, end) sorted
    by end time, then job id.
    """
    if farm.state is not FarmState.RUNNING:
        raise FarmNotRunning(f"farm {farm.app_id} is {farm.state.value}")
    pending = [j for j in farm.queue if j.state is JobState.IDLE]
    for job in pending:
        if not any(job.request <= p.share for p in farm.executors):
            raise Starvation(f"job {job.job_id} fits no executor share")
        if job.work_hs06_s > 0 and job.request.millicores == 0:
            raise Starvation(f"job {job.job_id} has work but requests zero millicores")
    starts: dict[str, float] = {}
    records: list[tuple[str, float, float]] = []
    in_flight = 0
    while True:
        for match in negotiate(farm):
            job = farm.job(match.job_id)
            slot = farm.slot(match.slot_id)
            if job.work_hs06_s == 0:
                duration = 0.0
            else:
                duration = job.work_hs06_s / (slot.node_speed_per_core * match.granted.millicores / 1000.0)
            starts[job.job_id] = sim.now
            sim.record(
                "job-matched",
                {"app_id": farm.app_id, "job_id": job.job_id, "slot_id": match.slot_id,
                 "granted": match.granted.as_dict()},
            )
            sim.schedule(
                sim.now + duration,
                "job-finished",
                {"app_id": farm.app_id, "job_id": job.job_id, "slot_id": match.slot_id,
                 "granted": match.granted.as_dict()},
            )
            in_flight += 1
        if in_flight == 0:
            break
        events = sim.run_until(sim.next_time())
        for event in events:
            if event.kind != "job-finished" or event.payload.get("app_id") != farm.app_id:
                continue
            job = farm.job(event.payload["job_id"])
            if job.state is not JobState.RUNNING:
                continue
            slot = farm.slot(event.payload["slot_id"])
            slot.free = slot.free + ResourceVector.from_dict(event.payload["granted"])
            job.state = JobState.DONE
            records.append((job.job_id, starts[job.job_id], event.t))
            in_flight -= 1
    records.sort(key=lambda r: (r[2], r[0]))
    return records
