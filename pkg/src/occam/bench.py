"""Benchmark scenario generators over the calibrated performance models.

Three synthetic scenarios are modeled: an iterative locked-step compute
kernel for weak scaling, a random/sequential I/O workload against the two
storage appliances, and a metadata workload over a directory tree. Each
returns a tabular report that can be written as CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .cluster import ApplianceKind, Inventory, NodeClass, NodeSpec
from .errors import NotEnoughNodes, Uncalibrated
from .simcore import (
    WorkShare,
    io_rates,
    locked_step_time,
    metadata_time,
    proportional_blocks,
    weak_scaling_efficiency,
)


class BenchKind(str, Enum):
    HPL = "hpl"
    FIO = "fio"
    MDTEST = "mdtest"


class Mix(str, Enum):
    HOMOGENEOUS_LIGHT = "light"
    LIGHT_PLUS_FAT = "mixed"


class Balancing(str, Enum):
    EQUAL = "equal"
    PROPORTIONAL = "proportional"


@dataclass(frozen=True)
class BenchScenario:
    kind: BenchKind
    params: dict


@dataclass
class BenchReport:
    scenario: BenchScenario
    rows: list[tuple[str, str, float, str]] = field(default_factory=list)

    def value(self, label: str, metric: str) -> float:
        for row in self.rows:
            if row[0] == label and row[1] == metric:
                return row[2]
        raise KeyError((label, metric))


def node_pool(inv: Inventory, mix: Mix) -> list[NodeSpec]:
    """Ordered candidate nodes for a compute scenario.

    The mixed pool interleaves fat nodes among the first light nodes so any
    run of two or more nodes is genuinely heterogeneous, while a single-node
    run stays on the light baseline.
    """
    light = sorted(inv.nodes_of(NodeClass.LIGHT), key=lambda n: n.id)
    if mix is Mix.HOMOGENEOUS_LIGHT:
        return light
    fat = sorted(inv.nodes_of(NodeClass.FAT), key=lambda n: n.id)
    pool = []
    for i, node in enumerate(light):
        pool.append(node)
        if i < len(fat):
            pool.append(fat[i])
    return pool


def hpl_scenario(
    inv: Inventory,
    node_counts: list[int],
    per_node_work: float,
    steps: int,
    mix: Mix,
    balancing: Balancing,
    granularity: float = 0.01,
) -> BenchReport:
    """Locked-step weak scaling over increasing node counts.

    ``per_node_work`` is the work a baseline (light) node receives. Equal
    balancing assigns work proportional to logical cores (constant work per
    logical core); proportional balancing splits work proportional to node
    speed, which equalizes per-node time.
    """
    pool = node_pool(inv, mix)
    if max(node_counts) > len(pool) or min(node_counts) < 1:
        raise NotEnoughNodes(f"pool of {len(pool)} nodes cannot serve counts {node_counts}")
    baseline = pool[0]
    report = BenchReport(
        BenchScenario(
            BenchKind.HPL,
            {"node_counts": list(node_counts), "per_node_work": per_node_work, "steps": steps,
             "mix": mix.value, "balancing": balancing.value, "granularity": granularity},
        )
    )
    t1 = None
    for count in node_counts:
        nodes = pool[:count]
        if balancing is Balancing.EQUAL:
            works = [per_node_work * n.logical_cores / baseline.logical_cores for n in nodes]
        else:
            total = per_node_work * sum(n.hs06 for n in nodes) / baseline.hs06
            total = round(total / granularity) * granularity
            works = proportional_blocks([n.hs06 for n in nodes], total, granularity)
        shares = [WorkShare(n.id, w, n.hs06) for n, w in zip(nodes, works)]
        elapsed = locked_step_time(shares, steps)
        if count == 1:
            t1 = elapsed
        if t1 is None:
            # Efficiency needs the single-node baseline even when 1 is not in
            # the requested counts.
            t1 = locked_step_time([WorkShare(baseline.id, per_node_work, baseline.hs06)], steps)
        report.rows.append((f"N={count}", "time_s", elapsed, "s"))
        report.rows.append((f"N={count}", "efficiency", weak_scaling_efficiency(t1, elapsed), "ratio"))
    return report


def fio_scenario(
    inv: Inventory,
    target: ApplianceKind,
    clients: int,
    numjobs_per_client: int = 2,
    block_kib: int = 4,
    rwmix_read_pct: int = 50,
    per_job_bytes: int = 8 * 1024**3,
    demand_kibps: float | None = None,
) -> BenchReport:
    """Mixed read/write workload against one appliance.

    Every job issues one read and one write demand (unlimited unless
    ``demand_kibps`` caps them); the fair-share engine grants rates and the
    job's bytes, split by the read percentage, give its completion time.
    """
    if clients < 1 or numjobs_per_client < 1:
        raise ValueError("clients and numjobs must be >= 1")
    appliance = inv.appliance(target)
    demand = math.inf if demand_kibps is None else demand_kibps
    demands = []
    for c in range(1, clients + 1):
        for j in range(numjobs_per_client):
            demands.append((f"client-{c:02d}-j{j}", "read", demand))
            demands.append((f"client-{c:02d}-j{j}", "write", demand))
    grants = io_rates(appliance, demands)
    read_total = math.fsum(g for (_, d, _), (_, g) in zip(demands, grants) if d == "read")
    write_total = math.fsum(g for (_, d, _), (_, g) in zip(demands, grants) if d == "write")
    report = BenchReport(
        BenchScenario(
            BenchKind.FIO,
            {"target": target.value, "clients": clients, "numjobs_per_client": numjobs_per_client,
             "block_kib": block_kib, "rwmix_read_pct": rwmix_read_pct, "per_job_bytes": per_job_bytes},
        )
    )
    report.rows.append(("aggregate", "read_kibps", read_total, "kiB/s"))
    report.rows.append(("aggregate", "write_kibps", write_total, "kiB/s"))
    rate_by_key = {(cid, d): g for (cid, d, _), (_, g) in zip(demands, grants)}
    read_kib = per_job_bytes * (rwmix_read_pct / 100.0) / 1024.0
    write_kib = per_job_bytes * (1 - rwmix_read_pct / 100.0) / 1024.0
    for c in range(1, clients + 1):
        job = f"client-{c:02d}-j0"
        read_t = read_kib / rate_by_key[(job, "read")] if read_kib else 0.0
        write_t = write_kib / rate_by_key[(job, "write")] if write_kib else 0.0
        report.rows.append((f"client-{c:02d}", "completion_s", max(read_t, write_t), "s"))
    return report


def mdtest_op_count(
    branching: int,
    depth: int,
    items_per_dir: int,
    ranks: int,
    iterations: int,
    phases: int,
) -> int:
    """Total metadata operations for a full tree walk.

    Every rank owns a tree with sum(branching**d for d in 0..depth)
    directories, touches items_per_dir files in each, and repeats that for
    every iteration and every phase of the workload.
    """
    if branching < 1 or items_per_dir < 1 or ranks < 1 or iterations < 1 or phases < 1:
        raise ValueError("all counts must be >= 1")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    dirs = sum(branching**d for d in range(depth + 1))
    return dirs * items_per_dir * ranks * iterations * phases


def calibrate_metadata_rate(inv: Inventory, observed_runtime_s: float, op_count: int) -> float:
    """Set the scratch metadata rate so the model reproduces a measured runtime."""
    if observed_runtime_s <= 0 or op_count <= 0:
        raise ValueError("runtime and op count must be positive")
    rate = op_count / observed_runtime_s
    inv.scratch.metadata_rate_ops_per_s = rate
    return rate


def mdtest_scenario(
    inv: Inventory,
    branching: int = 3,
    depth: int = 5,
    items_per_dir: int = 2000,
    ranks: int = 32,
    ppn: int = 4,
    iterations: int = 64,
    phases: int = 6,
) -> BenchReport:
    """Metadata workload runtime from the calibrated scratch rate."""
    rate = inv.scratch.metadata_rate_ops_per_s
    if rate is None:
        raise Uncalibrated("scratch metadata rate not calibrated")
    ops = mdtest_op_count(branching, depth, items_per_dir, ranks, iterations, phases)
    runtime = metadata_time(ops, rate)
    report = BenchReport(
        BenchScenario(
            BenchKind.MDTEST,
            {"branching": branching, "depth": depth, "items_per_dir": items_per_dir,
             "ranks": ranks, "ppn": ppn, "iterations": iterations, "phases": phases},
        )
    )
    report.rows.append(("mdtest", "nodes", ranks // ppn, "nodes"))
    report.rows.append(("mdtest", "op_count", ops, "ops"))
    report.rows.append(("mdtest", "runtime_s", runtime, "s"))
    return report


def _format_value(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(value)


def emit_csv(report: BenchReport, path) -> None:
    """Write a report as CSV: header, one row per entry, LF endings."""
    lines = ["label,metric,value,unit"]
    lines += [f"{label},{metric},{_format_value(value)},{unit}" for label, metric, value, unit in report.rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
