"""Staged workflow execution with per-stage acquisition and release.

Stages run strictly in order; each stage first reads its predecessor's
output back from the scratch appliance, then computes. Resources are
acquired per stage and released before the next one starts, so a pipeline
whose stages scale very differently never sits on idle nodes. Stage tasks
are class-agnostic: they land wherever the bin-packer finds room.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .allocator import Allocator, PartitionState, PlacementRequest, Role
from .cluster import SpeedMode, capacity, node_speed
from .errors import InsufficientResources
from .manifest import ComputingApplication, PipelineModel, StageSpec
from .simcore import Simulator


class RunState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass
class StageRecord:
    name: str
    start_t: float
    end_t: float
    parallelism_used: int
    output_mib: float


@dataclass
class PipelineRun:
    app_id: str
    stage_records: list[StageRecord] = field(default_factory=list)
    state: RunState = RunState.PENDING
    failed_stage: str | None = None

    @property
    def makespan(self) -> float:
        if not self.stage_records:
            return 0.0
        return self.stage_records[-1].end_t - self.stage_records[0].start_t


def stage_duration(stage: StageSpec, parallelism: int, per_core_speed: float) -> float:
    """Compute time of one stage at a given parallelism; linear in both."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if stage.work_hs06_s == 0:
        return 0.0
    cores = per_core_speed * parallelism * stage.per_task_share.millicores / 1000.0
    return stage.work_hs06_s / cores


def _placeable_count(stage: StageSpec, alloc: Allocator) -> int:
    """How many task shares fit right now, up to the stage's parallelism cap."""
    available = {o.node_id: o.available for o in alloc.offers()}
    count = 0
    while count < stage.max_parallelism:
        fit = None
        for node_id in sorted(available):
            if stage.per_task_share <= available[node_id]:
                remainder = available[node_id] - stage.per_task_share
                key = (remainder.millicores, remainder.memory_mib, node_id)
                if fit is None or key < fit[0]:
                    fit = (key, node_id)
        if fit is None:
            break
        available[fit[1]] = available[fit[1]] - stage.per_task_share
        count += 1
    return count


def run_pipeline(app: ComputingApplication, alloc: Allocator, sim: Simulator) -> PipelineRun:
    """Run every stage in order, charging transfer and compute time to each."""
    model = app.model
    assert isinstance(model, PipelineModel)
    run = PipelineRun(app_id=app.app_id, state=RunState.RUNNING)
    scratch = alloc.inv.scratch
    prev_output_mib = 0.0
    for stage in model.stages:
        parallelism = _placeable_count(stage, alloc)
        if parallelism == 0:
            run.state = RunState.FAILED
            run.failed_stage = stage.name
            partition = alloc.partition(app.app_id)
            if partition is not None and partition.state is not PartitionState.RELEASED:
                alloc.release(partition)
            sim.record("pipeline-failed", {"app_id": app.app_id, "stage": stage.name})
            exc = InsufficientResources(f"stage {stage.name!r}: not even one task share fits")
            exc.run = run
            raise exc
        requests = [
            PlacementRequest(Role.STAGE_TASK, stage.per_task_share, None)
            for _ in range(parallelism)
        ]
        placements = alloc.place(app.app_id, requests)
        classes = {alloc.inv.node(p.node_id).node_class for p in placements}
        per_core = min(node_speed(c, SpeedMode.PER_LOGICAL_CORE) for c in classes)
        transfer_s = 0.0
        if prev_output_mib > 0:
            transfer_s = prev_output_mib * 1024 / scratch.read_cap_kibps
        compute_s = stage_duration(stage, parallelism, per_core)
        start = sim.now
        end = start + transfer_s + compute_s
        sim.record(
            "stage-started",
            {"app_id": app.app_id, "stage": stage.name, "parallelism": parallelism,
             "nodes": sorted(p.node_id for p in placements),
             "transfer_s": transfer_s, "compute_s": compute_s},
        )
        sim.schedule(end, "stage-finished", {"app_id": app.app_id, "stage": stage.name})
        sim.run_until(end)
        alloc.release_containers(app.app_id, [p.container_id for p in placements])
        run.stage_records.append(
            StageRecord(stage.name, start, end, parallelism, stage.output_mib)
        )
        prev_output_mib = stage.output_mib
    partition = alloc.partition(app.app_id)
    if partition is not None:
        alloc.release(partition)
    run.state = RunState.DONE
    sim.record("pipeline-finished", {"app_id": app.app_id, "makespan": run.makespan})
    return run
