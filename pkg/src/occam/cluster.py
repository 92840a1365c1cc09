"""Static description of the physical cluster.

Node classes, network links and storage appliances are fixed at
construction time; every compute-time model in the simulator derives node
speed from the per-class throughput calibration table below. Physical core
counts are not published for this machine; they are inferred from the
concurrent-run counts of the throughput benchmark (48 and 96 runs with
Hyper-Threading enabled, i.e. twice the physical cores).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from enum import Enum


class NodeClass(str, Enum):
    LIGHT = "light"
    FAT = "fat"
    GPU = "gpu"


class SpeedMode(str, Enum):
    PER_NODE = "per-node"
    PER_LOGICAL_CORE = "per-logical-core"


class LinkKind(str, Enum):
    INFINIBAND = "infiniband"
    ETH10 = "eth10"
    ETH1 = "eth1"


class Topology(str, Enum):
    NONBLOCKING_FAT_TREE = "nonblocking-fat-tree"
    FLAT = "flat"


class ApplianceKind(str, Enum):
    SCRATCH = "scratch"
    ARCHIVE = "archive"


# Whole-node throughput scores (HS06) and logical core counts per class.
# The gpu class carries the same CPUs as the light class and reuses its score.
HS06_PER_NODE = {NodeClass.LIGHT: 549.7, NodeClass.FAT: 825.6, NodeClass.GPU: 549.7}
LOGICAL_CORES = {NodeClass.LIGHT: 48, NodeClass.FAT: 96, NodeClass.GPU: 48}


@dataclass(frozen=True)
class ResourceVector:
    """Allocatable resource quantities; 1000 millicores = one logical core.

    Ordering is the componentwise partial order: ``a <= b`` iff every field
    of ``a`` is at most the corresponding field of ``b``.
    """

    millicores: int = 0
    memory_mib: int = 0
    gpus: int = 0

    def __post_init__(self):
        if self.millicores < 0 or self.memory_mib < 0 or self.gpus < 0:
            raise ValueError(f"resource quantities must be non-negative: {self}")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.millicores + other.millicores,
            self.memory_mib + other.memory_mib,
            self.gpus + other.gpus,
        )

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.millicores - other.millicores,
            self.memory_mib - other.memory_mib,
            self.gpus - other.gpus,
        )

    def __le__(self, other: "ResourceVector") -> bool:
        return (
            self.millicores <= other.millicores
            and self.memory_mib <= other.memory_mib
            and self.gpus <= other.gpus
        )

    def __ge__(self, other: "ResourceVector") -> bool:
        return other.__le__(self)

    def is_zero(self) -> bool:
        return self.millicores == 0 and self.memory_mib == 0 and self.gpus == 0

    def as_dict(self) -> dict:
        return {"millicores": self.millicores, "memory_mib": self.memory_mib, "gpus": self.gpus}

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceVector":
        return cls(d["millicores"], d["memory_mib"], d["gpus"])


ZERO = ResourceVector(0, 0, 0)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    node_class: NodeClass
    physical_cores: int
    logical_cores: int
    memory_mib: int
    gpus: int
    local_disk_gib: int
    hs06: float

    def __post_init__(self):
        if self.logical_cores != 2 * self.physical_cores:
            raise ValueError(f"{self.id}: logical cores must be twice the physical cores")
        if self.gpus > 0 and self.node_class is not NodeClass.GPU:
            raise ValueError(f"{self.id}: only gpu-class nodes may carry GPUs")
        if self.hs06 <= 0 or self.memory_mib <= 0:
            raise ValueError(f"{self.id}: hs06 and memory must be positive")


@dataclass(frozen=True)
class NetworkLink:
    kind: LinkKind
    bandwidth_gbps: float
    topology: Topology

    _EXPECTED = {
        LinkKind.INFINIBAND: (56.0, Topology.NONBLOCKING_FAT_TREE),
        LinkKind.ETH10: (10.0, Topology.FLAT),
        LinkKind.ETH1: (1.0, Topology.FLAT),
    }

    def __post_init__(self):
        bw, topo = self._EXPECTED[self.kind]
        if self.bandwidth_gbps != bw or self.topology is not topo:
            raise ValueError(f"{self.kind.value}: expected {bw} Gb/s {topo.value}")


@dataclass
class StorageAppliance:
    kind: ApplianceKind
    capacity_tb: int
    read_cap_kibps: int
    write_cap_kibps: int
    # Filled in by metadata calibration; scratch only.
    metadata_rate_ops_per_s: float | None = None

    def __post_init__(self):
        if self.read_cap_kibps <= 0 or self.write_cap_kibps <= 0:
            raise ValueError("appliance caps must be positive")
        if self.kind is ApplianceKind.ARCHIVE and self.metadata_rate_ops_per_s is not None:
            raise ValueError("the archive appliance has no metadata rate")


@dataclass
class Inventory:
    nodes: list[NodeSpec] = field(default_factory=list)
    links: list[NetworkLink] = field(default_factory=list)
    storage: list[StorageAppliance] = field(default_factory=list)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError("node ids must be unique")
        kinds = [s.kind for s in self.storage]
        if len(kinds) != len(set(kinds)):
            raise ValueError("at most one appliance per kind")

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def nodes_of(self, node_class: NodeClass) -> list[NodeSpec]:
        return [n for n in self.nodes if n.node_class is node_class]

    def appliance(self, kind: ApplianceKind) -> StorageAppliance:
        for s in self.storage:
            if s.kind is kind:
                return s
        raise KeyError(kind)

    @property
    def scratch(self) -> StorageAppliance:
        return self.appliance(ApplianceKind.SCRATCH)

    @property
    def archive(self) -> StorageAppliance:
        return self.appliance(ApplianceKind.ARCHIVE)

    def link(self, kind: LinkKind) -> NetworkLink:
        for l in self.links:
            if l.kind is kind:
                return l
        raise KeyError(kind)


def capacity(node: NodeSpec) -> ResourceVector:
    """Full allocatable capacity of a node."""
    return ResourceVector(1000 * node.logical_cores, node.memory_mib, node.gpus)


def node_speed(node_class: NodeClass, mode: SpeedMode = SpeedMode.PER_NODE) -> float:
    """Calibrated throughput of a node class, whole-node or per logical core."""
    score = HS06_PER_NODE[node_class]
    if mode is SpeedMode.PER_NODE:
        return score
    return score / LOGICAL_CORES[node_class]


def default_inventory() -> Inventory:
    """The shipped cluster: 32 light, 4 fat, 4 gpu nodes plus two appliances."""
    nodes = [
        NodeSpec(f"L{i:02d}", NodeClass.LIGHT, 24, 48, 131072, 0, 400, 549.7)
        for i in range(1, 33)
    ]
    nodes += [
        NodeSpec(f"F{i:02d}", NodeClass.FAT, 48, 96, 786432, 0, 2800, 825.6)
        for i in range(1, 5)
    ]
    nodes += [
        NodeSpec(f"G{i:02d}", NodeClass.GPU, 24, 48, 131072, 2, 800, 549.7)
        for i in range(1, 5)
    ]
    links = [
        NetworkLink(LinkKind.INFINIBAND, 56.0, Topology.NONBLOCKING_FAT_TREE),
        NetworkLink(LinkKind.ETH10, 10.0, Topology.FLAT),
        NetworkLink(LinkKind.ETH1, 1.0, Topology.FLAT),
    ]
    storage = [
        StorageAppliance(ApplianceKind.SCRATCH, 256, 2026246, 2025983),
        StorageAppliance(ApplianceKind.ARCHIVE, 768, 39314, 39314),
    ]
    return Inventory(nodes=nodes, links=links, storage=storage)


def inventory_to_json(inv: Inventory) -> str:
    doc = {
        "nodes": [
            {
                "id": n.id,
                "class": n.node_class.value,
                "physical_cores": n.physical_cores,
                "logical_cores": n.logical_cores,
                "memory_mib": n.memory_mib,
                "gpus": n.gpus,
                "local_disk_gib": n.local_disk_gib,
                "hs06": n.hs06,
            }
            for n in inv.nodes
        ],
        "links": [
            {"kind": l.kind.value, "bandwidth_gbps": l.bandwidth_gbps, "topology": l.topology.value}
            for l in inv.links
        ],
        "storage": [
            {
                "kind": s.kind.value,
                "capacity_tb": s.capacity_tb,
                "read_cap_kibps": s.read_cap_kibps,
                "write_cap_kibps": s.write_cap_kibps,
                "metadata_rate_ops_per_s": s.metadata_rate_ops_per_s,
            }
            for s in inv.storage
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def inventory_from_json(text: str) -> Inventory:
    doc = json.loads(text)
    nodes = [
        NodeSpec(
            d["id"],
            NodeClass(d["class"]),
            d["physical_cores"],
            d["logical_cores"],
            d["memory_mib"],
            d["gpus"],
            d["local_disk_gib"],
            d["hs06"],
        )
        for d in doc["nodes"]
    ]
    links = [
        NetworkLink(LinkKind(d["kind"]), d["bandwidth_gbps"], Topology(d["topology"]))
        for d in doc["links"]
    ]
    storage = [
        StorageAppliance(
            ApplianceKind(d["kind"]),
            d["capacity_tb"],
            d["read_cap_kibps"],
            d["write_cap_kibps"],
            d.get("metadata_rate_ops_per_s"),
        )
        for d in doc["storage"]
    ]
    return Inventory(nodes=nodes, links=links, storage=storage)
