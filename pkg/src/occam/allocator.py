"""Offer-based resource allocation into disjoint per-application partitions.

The allocator is the single writer for placement state. Each scheduling
round snapshots the cluster into epoch-tagged offers; a request batch is
then bin-packed best-fit and applied atomically -- either every request in
the batch lands or none do. Whole-node requests claim a node's entire
capacity and therefore require a completely free node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .cluster import Inventory, NodeClass, ResourceVector, capacity
from .errors import AlreadyReleased, CorruptState, InsufficientResources


class Role(str, Enum):
    ACCESS = "access"
    MANAGER = "manager"
    EXECUTOR = "executor"
    STAGE_TASK = "stage-task"
    SESSION_EXEC = "session-exec"
    CHILD = "child"


class PartitionState(str, Enum):
    DEPLOYING = "deploying"
    RUNNING = "running"
    RELEASED = "released"


@dataclass(frozen=True)
class Offer:
    node_id: str
    available: ResourceVector
    epoch: int


@dataclass(frozen=True)
class Placement:
    container_id: str
    app_id: str
    node_id: str
    share: ResourceVector
    role: Role


@dataclass(frozen=True)
class PlacementRequest:
    role: Role
    share: ResourceVector
    node_class: NodeClass | None  # None places on any class
    whole_node: bool = False


@dataclass
class Partition:
    app_id: str
    placements: list[Placement] = field(default_factory=list)
    state: PartitionState = PartitionState.DEPLOYING


def make_offers(inv: Inventory, live: list[Placement], epoch: int) -> list[Offer]:
    """One offer per node with spare capacity; fully busy nodes are omitted."""
    used: dict[str, ResourceVector] = {}
    for p in live:
        used[p.node_id] = used.get(p.node_id, ResourceVector()) + p.share
    offers = []
    for node in sorted(inv.nodes, key=lambda n: n.id):
        cap = capacity(node)
        taken = used.get(node.id, ResourceVector())
        if not taken <= cap:
            raise CorruptState(f"node {node.id} over-allocated: {taken.as_dict()} > {cap.as_dict()}")
        available = cap - taken
        if not available.is_zero():
            offers.append(Offer(node.id, available, epoch))
    return offers


def place(
    requests: list[PlacementRequest],
    offers: list[Offer],
    inv: Inventory,
    app_id: str,
    id_start: int = 0,
) -> list[Placement]:
    """Map each request onto one node, or fail atomically.

    Fractional requests pick the fitting offer that leaves the smallest
    remainder (by millicores, then memory); whole-node requests need a
    full-capacity offer. Ties always break toward the ascending node id, so
    placement is a pure function of its inputs.
    """
    available = {o.node_id: o.available for o in offers}
    placements = []
    for i, req in enumerate(requests):
        chosen = None
        for node_id in sorted(available):
            node = inv.node(node_id)
            if req.node_class is not None and node.node_class is not req.node_class:
                continue
            cap = capacity(node)
            if req.whole_node:
                if available[node_id] == cap:
                    chosen = node_id
                    break  # every full node leaves a zero remainder; first id wins
            else:
                if req.share <= available[node_id]:
                    remainder = available[node_id] - req.share
                    key = (remainder.millicores, remainder.memory_mib, node_id)
                    if chosen is None or key < chosen[0]:
                        chosen = (key, node_id)
        if chosen is None:
            raise InsufficientResources(
                f"request {i} ({req.role.value}, "
                f"{'whole node' if req.whole_node else req.share.as_dict()}"
                f"{', class ' + req.node_class.value if req.node_class else ''}) cannot be satisfied"
            )
        node_id = chosen if req.whole_node else chosen[1]
        share = capacity(inv.node(node_id)) if req.whole_node else req.share
        available[node_id] = available[node_id] - share
        placements.append(
            Placement(
                container_id=f"c{id_start + i:04d}",
                app_id=app_id,
                node_id=node_id,
                share=share,
                role=req.role,
            )
        )
    return placements


class Allocator:
    """Stateful wrapper tying offers, placement and release together."""

    def __init__(self, inv: Inventory):
        self.inv = inv
        self.live: dict[str, Placement] = {}
        self.partitions: dict[str, Partition] = {}
        self._epoch = 0
        self._container_seq = 0

    def offers(self) -> list[Offer]:
        self._epoch += 1
        return make_offers(self.inv, list(self.live.values()), self._epoch)

    def place(self, app_id: str, requests: list[PlacementRequest]) -> list[Placement]:
        placements = place(requests, self.offers(), self.inv, app_id, self._container_seq)
        self._container_seq += len(placements)
        partition = self.partitions.setdefault(app_id, Partition(app_id=app_id))
        if partition.state is PartitionState.RELEASED:
            # An application may acquire again after a full release (pipelines
            # do this between runs); reopen its partition.
            partition.state = PartitionState.DEPLOYING
        partition.placements.extend(placements)
        for p in placements:
            self.live[p.container_id] = p
        return placements

    def partition(self, app_id: str) -> Partition | None:
        return self.partitions.get(app_id)

    def release(self, partition: Partition) -> list[tuple[str, ResourceVector]]:
        """Release every placement a partition holds; idempotence is an error."""
        if partition.state is PartitionState.RELEASED:
            raise AlreadyReleased(f"partition {partition.app_id} already released")
        freed = [(p.node_id, p.share) for p in partition.placements]
        for p in partition.placements:
            self.live.pop(p.container_id, None)
        partition.placements.clear()
        partition.state = PartitionState.RELEASED
        return freed

    def release_containers(self, app_id: str, container_ids: list[str]) -> list[tuple[str, ResourceVector]]:
        """Release individual placements while keeping the partition open."""
        partition = self.partitions[app_id]
        wanted = set(container_ids)
        freed = []
        for p in list(partition.placements):
            if p.container_id in wanted:
                freed.append((p.node_id, p.share))
                partition.placements.remove(p)
                self.live.pop(p.container_id, None)
        return freed
